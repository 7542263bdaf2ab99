// dfsom: command-line front end for the candlestick / DFSOM / GRU trading
// pipeline.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dfsom/pipeline.hpp"
#include "dfsom/synthetic.hpp"

namespace fs = std::filesystem;
using namespace dfsom;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> data, out, market, cache_dir, timestamp_format, delimiter;
  std::optional<bool> header;
  std::optional<int> period, train_days, test_days, windows;
  std::optional<double> rate, fee, epsilon, learning_rate;
  std::optional<std::size_t> rows, max_iter, epochs, hidden, min_samples;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  void bind(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON pipeline config")->check(CLI::ExistingFile);
    app->add_option("--data", data, "Minute-bar CSV (timestamp,open,high,low,close,volume)");
    app->add_option("-o,--out", out, "Output directory");
    app->add_option("--market", market, "futures (30 min, 0.2% fee) or forex (60 min, 0.1% fee)");
    app->add_option("--header", header, "Input has a header row (true/false)");
    app->add_option("--delimiter", delimiter, "Field delimiter");
    app->add_option("--timestamp-format", timestamp_format, "strftime-style timestamp format");
    app->add_option("--period", period, "Aggregation period in minutes");
    app->add_option("--rows", rows, "Image height in rows");
    app->add_option("--train-days", train_days, "Training span per walk-forward window");
    app->add_option("--test-days", test_days, "Test span per walk-forward window");
    app->add_option("--windows", windows, "Number of walk-forward windows");
    app->add_option("--rate", rate, "Threshold band rate");
    app->add_option("--fee", fee, "Round-trip fee rate");
    app->add_option("--epsilon", epsilon, "FSOM convergence threshold");
    app->add_option("--max-iter", max_iter, "FSOM iteration cap");
    app->add_option("--epochs", epochs, "GRU training epochs");
    app->add_option("--hidden", hidden, "GRU hidden size");
    app->add_option("--learning-rate", learning_rate, "GRU learning rate");
    app->add_option("--min-samples", min_samples, "Windows needed for a dedicated cluster GRU");
    app->add_option("--seed", seed, "Base random seed");
    app->add_option("--cache-dir", cache_dir, "Cache trained DFSOM bundles here");
    app->add_flag("-v,--verbose", verbose, "Log stage timings and FSOM iterations");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (market) {
      json j = {{"market", *market}};
      c.market = config_from_json(j).market;
      c.apply_market_defaults();
    }
    if (data) c.data_path = *data;
    if (out) c.output_dir = *out;
    if (header) c.parse.has_header = *header;
    if (delimiter) {
      if (delimiter->size() != 1) throw ConfigError("--delimiter must be one character");
      c.parse.delimiter = (*delimiter)[0];
    }
    if (timestamp_format) c.parse.timestamp_format = *timestamp_format;
    if (period) c.period_minutes = *period;
    if (rows) c.image_rows = *rows;
    if (train_days) c.train_days = *train_days;
    if (test_days) c.test_days = *test_days;
    if (windows) c.window_count = *windows;
    if (rate) c.threshold_rate = *rate;
    if (fee) c.fee_rate = *fee;
    if (epsilon) c.dfsom.epsilon = *epsilon;
    if (max_iter) c.dfsom.max_iter = *max_iter;
    if (epochs) c.gru.epochs = *epochs;
    if (hidden) c.gru.hidden_dim = *hidden;
    if (learning_rate) c.gru.learning_rate = *learning_rate;
    if (min_samples) c.gru.min_samples = *min_samples;
    if (seed) c.seed = *seed;
    if (cache_dir) c.cache_dir = *cache_dir;
    c.verbose = verbose;
    c.validate();
    if (c.data_path.empty()) throw ConfigError("no data path given (--data or data.path)");
    return c;
  }
};

void write_png(const fs::path& path, const CandleImage& img) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw ConfigError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw ConfigError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()), static_cast<png_uint_32>(img.rows()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> line(img.cols() * 3);
  auto to8 = [](double v) { return static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  // Highest price at the top of the picture.
  for (std::size_t r = img.rows(); r-- > 0;) {
    for (std::size_t c = 0; c < img.cols(); ++c) {
      line[3 * c] = to8(img.red(r, c));
      line[3 * c + 1] = to8(img.green(r, c));
      line[3 * c + 2] = to8(img.blue(r, c));
    }
    png_write_row(png, line.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<AggBar> load_bars(const PipelineConfig& cfg) {
  const auto series = load_series(cfg);
  try {
    return aggregate(series, cfg.period_minutes);
  } catch (const Error& e) {
    throw StageError(e.kind(), 0, "aggregate", e.what());
  }
}

std::vector<CandleImage> render_all(const PipelineConfig& cfg, std::span<const AggBar> bars,
                                    std::vector<BarWindow>& windows, std::size_t limit) {
  windows.clear();
  for (std::size_t k = 0; k + cfg.bars_per_image <= bars.size(); ++k) windows.push_back({k, cfg.bars_per_image});
  if (limit > 0 && windows.size() > limit) windows.resize(limit);
  std::vector<CandleImage> images;
  images.reserve(windows.size());
  for (const auto& w : windows) images.push_back(render_window(w.bars(bars), cfg.image_rows, cfg.bars_per_image));
  return images;
}

int cmd_render(const PipelineConfig& cfg, bool png, std::size_t limit) {
  const auto bars = load_bars(cfg);
  std::vector<BarWindow> windows;
  const auto images = render_all(cfg, bars, windows, limit);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "image_%05zu", i);
    std::ofstream f(out / (std::string(name) + ".bin"), std::ios::binary);
    write_image(f, images[i]);
    if (png) write_png(out / (std::string(name) + ".png"), images[i]);
  }
  std::cout << "rendered " << images.size() << " images to " << out.string() << '\n';
  return 0;
}

int cmd_features(const PipelineConfig& cfg, std::size_t limit) {
  const auto bars = load_bars(cfg);
  std::vector<BarWindow> windows;
  const auto images = render_all(cfg, bars, windows, limit);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto gray = to_grayscale(images[i]);
    for (std::size_t l = 0; l < cfg.dfsom.layers.size(); ++l) {
      const auto& hog = cfg.dfsom.layers[l].hog;
      char name[48];
      std::snprintf(name, sizeof name, "hog_l%zu_%05zu.bin", l, i);
      std::ofstream f(out / name, std::ios::binary);
      write_patch_grid(f, extract_patch_grid(gray, hog), gray.rows(), gray.cols(), hog);
    }
  }
  std::cout << "wrote descriptors for " << images.size() << " images, " << cfg.dfsom.layers.size() << " layers\n";
  return 0;
}

int cmd_cluster(const PipelineConfig& cfg, std::size_t limit) {
  const auto bars = load_bars(cfg);
  std::vector<BarWindow> windows;
  const auto images = render_all(cfg, bars, windows, limit);
  auto dcfg = cfg.dfsom;
  dcfg.seed = cfg.seed;
  DfsomModel model;
  try {
    model = train(images, dcfg);
  } catch (const Error& e) {
    throw StageError(e.kind(), 0, "dfsom", e.what());
  }
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  {
    std::ofstream f(out / "dfsom.bin", std::ios::binary);
    write_model(f, model);
  }
  std::ofstream csv(out / "clusters.csv");
  csv << "window_start,cluster\n";
  for (std::size_t i = 0; i < images.size(); ++i)
    csv << bars[windows[i].first].start_time.format() << ',' << assign_cluster(model, images[i]) << '\n';
  std::cout << "clustered " << images.size() << " images; output FSOM converged after "
            << model.output_report.iterations << " iterations\n";
  return 0;
}

int cmd_backtest(const std::vector<std::string>& files, double rate, double fee, const fs::path& out) {
  std::vector<WindowReport> reports;
  TradeLog all;
  int index = 0;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError("cannot open predictions file " + f);
    const auto rows = read_predictions(in);
    const auto log = simulate(decisions_from(rows, rate), fee);
    WindowReport r;
    r.index = ++index;
    if (!rows.empty()) r.test_range = {rows.front().entry_time, rows.back().entry_time + rows.back().holding_minutes};
    r.totals = totals_of(log);
    r.metrics = metrics_from_totals(r.totals);
    reports.push_back(r);
    all.insert(all.end(), log.begin(), log.end());
  }
  emit_report(reports, out);
  std::ofstream trades(out / "trades.csv");
  write_trade_log(trades, all);
  std::cout << "backtested " << all.size() << " trades over " << files.size() << " prediction files\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Candlestick-image DFSOM clustering with per-cluster GRU trading"};
  app.require_subcommand(1);

  Overrides run_o, render_o, features_o, cluster_o;
  auto* run = app.add_subcommand("run", "Full walk-forward pipeline");
  run_o.bind(run);

  bool png = false;
  std::size_t render_limit = 0, features_limit = 0, cluster_limit = 0;
  auto* render = app.add_subcommand("render", "Render candlestick images (optionally PNG)");
  render_o.bind(render);
  render->add_flag("--png", png, "Also write PNG previews");
  render->add_option("--limit", render_limit, "Render at most this many images (0 = all)");

  auto* features = app.add_subcommand("features", "Dump HOG descriptor grids per image and layer");
  features_o.bind(features);
  features->add_option("--limit", features_limit, "Process at most this many images (0 = all)");

  auto* cluster = app.add_subcommand("cluster", "Train a DFSOM on every image and assign clusters");
  cluster_o.bind(cluster);
  cluster->add_option("--limit", cluster_limit, "Use at most this many images (0 = all)");

  std::vector<std::string> pred_files;
  double bt_rate = 0.001, bt_fee = 0.002;
  std::string bt_out = "dfsom-backtest";
  auto* backtest = app.add_subcommand("backtest", "Trade cached predictions files");
  backtest->add_option("predictions", pred_files, "predictions_w*.csv files from a run")->required();
  backtest->add_option("--rate", bt_rate, "Threshold band rate");
  backtest->add_option("--fee", bt_fee, "Round-trip fee rate");
  backtest->add_option("-o,--out", bt_out, "Output directory");

  SyntheticSpec synth_spec;
  std::string synth_out = "synthetic.csv";
  int synth_year = 2020;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic minute-bar CSV");
  synth->add_option("-o,--out", synth_out, "Output CSV path");
  synth->add_option("--days", synth_spec.days, "Number of trading days");
  synth->add_option("--minutes-per-day", synth_spec.minutes_per_day, "Minute bars per day");
  synth->add_option("--seed", synth_spec.seed, "Noise seed");
  synth->add_option("--year", synth_year, "Start year (series begins Jan 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }

  try {
    if (*run) {
      const auto cfg = run_o.resolve();
      const auto result = run_pipeline(cfg);
      double sum = 0;
      for (const auto& w : result.windows) sum += w.report.metrics.pr;
      std::cout << "windows: " << result.windows.size() << "  SUMPR: " << fmt_double(sum) << "%  config "
                << result.config_hash << "\n";
      return 0;
    }
    if (*render) return cmd_render(render_o.resolve(), png, render_limit);
    if (*features) return cmd_features(features_o.resolve(), features_limit);
    if (*cluster) return cmd_cluster(cluster_o.resolve(), cluster_limit);
    if (*backtest) return cmd_backtest(pred_files, bt_rate, bt_fee, bt_out);
    if (*synth) {
      synth_spec.start = Timestamp::from_civil(synth_year, 1, 1);
      std::ofstream out(synth_out);
      if (!out) throw ConfigError("cannot write " + synth_out);
      write_minute_bars(out, make_synthetic_series(synth_spec));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::numeric);
  }
  return 0;
}
