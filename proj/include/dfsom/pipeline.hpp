#pragma once

// End-to-end walk-forward pipeline: ingest, schedule, render, features,
// DFSOM, per-cluster GRUs, trading and reporting.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dfsom/chart_gen.hpp"
#include "dfsom/core.hpp"
#include "dfsom/dfsom_model.hpp"
#include "dfsom/gru.hpp"
#include "dfsom/hog.hpp"
#include "dfsom/market_data.hpp"
#include "dfsom/trading.hpp"

namespace dfsom {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

enum class Market { futures, forex };

struct PipelineConfig {
  std::string data_path;
  ParseOptions parse;
  Market market = Market::futures;
  int period_minutes = 30;
  std::size_t image_rows = 100;
  std::size_t bars_per_image = kBarsPerImage;
  DfsomConfig dfsom;
  GruConfig gru;
  double threshold_rate = 0.001;
  double fee_rate = 0.002;
  int train_days = 105;
  int test_days = 14;
  int window_count = 6;
  std::uint64_t seed = 1;
  std::string output_dir = "dfsom-out";
  std::string cache_dir;  // empty disables caching
  bool verbose = false;

  /// Period and fee defaults per market: futures 30 min / 0.2%, forex
  /// 60 min / 0.1%.
  void apply_market_defaults() {
    period_minutes = market == Market::futures ? 30 : 60;
    fee_rate = market == Market::futures ? 0.002 : 0.001;
  }

  void validate() const {
    if (period_minutes <= 0) throw ConfigError("period_minutes must be positive");
    if (image_rows < 2) throw ConfigError("image_rows must be >= 2");
    if (bars_per_image < 1) throw ConfigError("bars_per_image must be >= 1");
    if (threshold_rate < 0) throw ConfigError("threshold rate must be non-negative");
    if (fee_rate < 0) throw ConfigError("fee rate must be non-negative");
    if (train_days <= 0 || test_days <= 0) throw ConfigError("schedule spans must be positive");
    if (window_count < 0) throw ConfigError("window count must be non-negative");
    dfsom.validate();
    gru.validate();
    for (const auto& l : dfsom.layers)
      if (static_cast<std::size_t>(l.hog.window_side) > std::min(image_rows, bars_per_image))
        throw ConfigError("HOG window " + std::to_string(l.hog.window_side) + " does not fit the image");
  }
};

inline json to_json(const PipelineConfig& c) {
  json layers = json::array();
  for (const auto& l : c.dfsom.layers)
    layers.push_back({{"window", l.hog.window_side},
                      {"stride", l.hog.stride},
                      {"bins", l.hog.bin_count},
                      {"grid_rows", l.grid_rows},
                      {"grid_cols", l.grid_cols}});
  return {
      {"data",
       {{"path", c.data_path},
        {"delimiter", std::string(1, c.parse.delimiter)},
        {"header", c.parse.has_header},
        {"timestamp_format", c.parse.timestamp_format}}},
      {"market", c.market == Market::futures ? "futures" : "forex"},
      {"period_minutes", c.period_minutes},
      {"image", {{"rows", c.image_rows}, {"bars", c.bars_per_image}}},
      {"dfsom",
       {{"layers", layers},
        {"output_rows", c.dfsom.output_rows},
        {"output_cols", c.dfsom.output_cols},
        {"epsilon", c.dfsom.epsilon},
        {"max_iter", c.dfsom.max_iter}}},
      {"gru",
       {{"hidden", c.gru.hidden_dim},
        {"epochs", c.gru.epochs},
        {"learning_rate", c.gru.learning_rate},
        {"min_samples", c.gru.min_samples}}},
      {"trading", {{"rate", c.threshold_rate}, {"fee", c.fee_rate}}},
      {"schedule", {{"train_days", c.train_days}, {"test_days", c.test_days}, {"count", c.window_count}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"cache_dir", c.cache_dir},
  };
}

namespace detail {

/// Reads `key` from object `j` into `out` when present; unknown keys are
/// rejected by the caller.
template <typename T>
void take(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown config key '" + where + "." + k + "'");
  }
}

}  // namespace detail

/// Builds a config from JSON. Missing keys keep their defaults; choosing a
/// market first applies that market's period and fee, which explicit keys
/// may then override.
inline PipelineConfig config_from_json(const json& j) {
  using detail::only_keys;
  using detail::take;
  PipelineConfig c;
  only_keys(j, {"data", "market", "period_minutes", "image", "dfsom", "gru", "trading", "schedule", "seed", "output_dir",
                "cache_dir"},
            "config");
  if (j.contains("market")) {
    std::string m;
    take(j, "market", m);
    if (m == "futures") c.market = Market::futures;
    else if (m == "forex") c.market = Market::forex;
    else throw ConfigError("market must be 'futures' or 'forex', got '" + m + "'");
    c.apply_market_defaults();
  }
  if (auto it = j.find("data"); it != j.end()) {
    only_keys(*it, {"path", "delimiter", "header", "timestamp_format"}, "data");
    take(*it, "path", c.data_path);
    std::string delim(1, c.parse.delimiter);
    take(*it, "delimiter", delim);
    if (delim.size() != 1) throw ConfigError("data.delimiter must be a single character");
    c.parse.delimiter = delim[0];
    take(*it, "header", c.parse.has_header);
    take(*it, "timestamp_format", c.parse.timestamp_format);
  }
  take(j, "period_minutes", c.period_minutes);
  if (auto it = j.find("image"); it != j.end()) {
    only_keys(*it, {"rows", "bars"}, "image");
    take(*it, "rows", c.image_rows);
    take(*it, "bars", c.bars_per_image);
  }
  if (auto it = j.find("dfsom"); it != j.end()) {
    only_keys(*it, {"layers", "output_rows", "output_cols", "epsilon", "max_iter"}, "dfsom");
    if (auto lit = it->find("layers"); lit != it->end()) {
      if (!lit->is_array()) throw ConfigError("dfsom.layers must be an array");
      c.dfsom.layers.clear();
      for (const auto& lj : *lit) {
        only_keys(lj, {"window", "stride", "bins", "grid_rows", "grid_cols"}, "dfsom.layers[]");
        LayerConfig l;
        take(lj, "window", l.hog.window_side);
        take(lj, "stride", l.hog.stride);
        take(lj, "bins", l.hog.bin_count);
        take(lj, "grid_rows", l.grid_rows);
        take(lj, "grid_cols", l.grid_cols);
        c.dfsom.layers.push_back(l);
      }
    }
    take(*it, "output_rows", c.dfsom.output_rows);
    take(*it, "output_cols", c.dfsom.output_cols);
    take(*it, "epsilon", c.dfsom.epsilon);
    take(*it, "max_iter", c.dfsom.max_iter);
  }
  if (auto it = j.find("gru"); it != j.end()) {
    only_keys(*it, {"hidden", "epochs", "learning_rate", "min_samples"}, "gru");
    take(*it, "hidden", c.gru.hidden_dim);
    take(*it, "epochs", c.gru.epochs);
    take(*it, "learning_rate", c.gru.learning_rate);
    take(*it, "min_samples", c.gru.min_samples);
  }
  if (auto it = j.find("trading"); it != j.end()) {
    only_keys(*it, {"rate", "fee"}, "trading");
    take(*it, "rate", c.threshold_rate);
    take(*it, "fee", c.fee_rate);
  }
  if (auto it = j.find("schedule"); it != j.end()) {
    only_keys(*it, {"train_days", "test_days", "count"}, "schedule");
    take(*it, "train_days", c.train_days);
    take(*it, "test_days", c.test_days);
    take(*it, "count", c.window_count);
  }
  take(j, "seed", c.seed);
  take(j, "output_dir", c.output_dir);
  take(j, "cache_dir", c.cache_dir);
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return config_from_json(json::parse(in, nullptr, true, true));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

/// Hash of the fully resolved configuration.
inline std::string config_hash(const PipelineConfig& c) {
  Fnv1a h;
  h.update(to_json(c).dump());
  return h.hex();
}

// ---------------------------------------------------------------------------
// Reports

struct WindowReport {
  int index = 0;
  TimeRange test_range;
  TradeTotals totals;
  MetricsReport metrics;
};

inline const char* kMetricsHeader =
    "window,test_start,test_end,PR,SUMPR,TN,TN_plus,TN_minus,avg_return,avg_profit,avg_loss,pl_ratio,accuracy";

namespace detail {

inline std::string opt_cell(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }
inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json metrics_json(const MetricsReport& m, double sumpr) {
  return {{"PR", m.pr},
          {"SUMPR", sumpr},
          {"TN", m.tn},
          {"TN_plus", m.tn_plus},
          {"TN_minus", m.tn_minus},
          {"avg_return", opt_json(m.avg_return)},
          {"avg_profit", opt_json(m.avg_profit)},
          {"avg_loss", opt_json(m.avg_loss)},
          {"pl_ratio", opt_json(m.pl_ratio)},
          {"accuracy", opt_json(m.accuracy)}};
}

inline void metrics_csv_row(std::ostream& out, const std::string& label, const std::string& start,
                            const std::string& end, const MetricsReport& m, double sumpr) {
  out << label << ',' << start << ',' << end << ',' << fmt_double(m.pr) << ',' << fmt_double(sumpr) << ',' << m.tn
      << ',' << m.tn_plus << ',' << m.tn_minus << ',' << opt_cell(m.avg_return) << ',' << opt_cell(m.avg_profit)
      << ',' << opt_cell(m.avg_loss) << ',' << opt_cell(m.pl_ratio) << ',' << opt_cell(m.accuracy) << '\n';
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace detail

/// Writes metrics.csv and metrics.json: one row per window with the running
/// SUMPR, then a "total" row over all windows' trades. An empty list
/// produces a header-only CSV.
inline void emit_report(std::span<const WindowReport> reports, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  std::ostringstream csv;
  csv << kMetricsHeader << '\n';
  json windows = json::array();
  double sumpr = 0;
  TradeTotals all;
  for (const auto& r : reports) {
    sumpr += r.metrics.pr;
    const auto start = r.test_range.begin.format();
    const auto end = r.test_range.end.format();
    detail::metrics_csv_row(csv, std::to_string(r.index), start, end, r.metrics, sumpr);
    auto row = detail::metrics_json(r.metrics, sumpr);
    row["window"] = r.index;
    row["test_start"] = start;
    row["test_end"] = end;
    windows.push_back(std::move(row));
    all.tn_plus += r.totals.tn_plus;
    all.tn_minus += r.totals.tn_minus;
    all.total_profit += r.totals.total_profit;
    all.total_loss += r.totals.total_loss;
  }
  json doc = {{"windows", windows}, {"total", nullptr}};
  if (!reports.empty()) {
    const auto total = metrics_from_totals(all);
    const auto start = reports.front().test_range.begin.format();
    const auto end = reports.back().test_range.end.format();
    detail::metrics_csv_row(csv, "total", start, end, total, sumpr);
    doc["total"] = detail::metrics_json(total, sumpr);
    doc["total"]["test_start"] = start;
    doc["total"]["test_end"] = end;
  }
  detail::write_file(dir / "metrics.csv", csv.str());
  detail::write_file(dir / "metrics.json", doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Predictions (input of the backtest verb)

struct PredictionRow {
  Timestamp decision_time;
  double close_t = 0;
  double predicted = 0;
  std::size_t cluster = 0;
  Timestamp entry_time;
  std::int64_t holding_minutes = 0;
  double entry_price = 0;
  double exit_price = 0;
};

inline const char* kPredictionsHeader =
    "decision_time,close_t,predicted,cluster,entry_time,holding_minutes,entry_price,exit_price";

inline void write_predictions(std::ostream& out, std::span<const PredictionRow> rows) {
  out << kPredictionsHeader << '\n';
  for (const auto& p : rows)
    out << p.decision_time.format() << ',' << fmt_double(p.close_t) << ',' << fmt_double(p.predicted) << ','
        << p.cluster << ',' << p.entry_time.format() << ',' << p.holding_minutes << ',' << fmt_double(p.entry_price)
        << ',' << fmt_double(p.exit_price) << '\n';
}

inline std::vector<PredictionRow> read_predictions(std::istream& in) {
  std::vector<PredictionRow> rows;
  std::string line;
  std::size_t n = 0;
  const std::string fmt = "%Y-%m-%dT%H:%M";
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw DataError("predictions row " + std::to_string(n) + ": expected 8 fields");
    PredictionRow p;
    double cluster = 0, hold = 0;
    bool ok = Timestamp::parse(f[0], fmt, p.decision_time) && detail::parse_number(f[1], p.close_t) &&
              detail::parse_number(f[2], p.predicted) && detail::parse_number(f[3], cluster) &&
              Timestamp::parse(f[4], fmt, p.entry_time) && detail::parse_number(f[5], hold) &&
              detail::parse_number(f[6], p.entry_price) && detail::parse_number(f[7], p.exit_price);
    if (!ok) throw DataError("predictions row " + std::to_string(n) + ": malformed field");
    p.cluster = static_cast<std::size_t>(cluster);
    p.holding_minutes = static_cast<std::int64_t>(hold);
    rows.push_back(p);
  }
  return rows;
}

inline std::vector<Decision> decisions_from(std::span<const PredictionRow> rows, double rate) {
  std::vector<Decision> out;
  out.reserve(rows.size());
  for (const auto& p : rows)
    out.push_back({decide(p.predicted, p.close_t, rate), p.entry_time, p.holding_minutes, p.entry_price, p.exit_price});
  return out;
}

// ---------------------------------------------------------------------------
// Walk-forward run

/// Error raised inside the pipeline, tagged with where it happened. The
/// kind of the underlying error is preserved.
class StageError : public Error {
 public:
  StageError(ErrorKind kind, int window, const std::string& stage, const std::string& what)
      : Error(kind, "[window " + std::to_string(window) + "][" + stage + "] " + what), window_(window), stage_(stage) {}
  int window() const { return window_; }
  const std::string& stage() const { return stage_; }

 private:
  int window_;
  std::string stage_;
};

struct MinMaxScaler {
  double lo = 0;
  double hi = 1;

  double span() const { return hi > lo ? hi - lo : 1.0; }
  double scale(double p) const { return (p - lo) / span(); }
  double unscale(double v) const { return lo + v * span(); }
};

struct WindowRun {
  SplitWindow split;
  WindowReport report;
  TradeLog trades;
  std::vector<PredictionRow> predictions;
  ClusterModelSet gru_models;
  DfsomModel dfsom_model;
  std::size_t train_samples = 0;
  Timestamp max_train_timestamp;
  Timestamp min_test_timestamp;
  std::vector<std::pair<std::string, double>> stage_ms;
};

namespace detail {

inline void log_info(const PipelineConfig& cfg, const std::string& msg) {
  if (cfg.verbose) std::clog << "[info] " << msg << '\n';
}

inline Matrix close_sequence(std::span<const AggBar> bars, const BarWindow& w, const MinMaxScaler& s) {
  Matrix m(w.length, 1);
  for (std::size_t t = 0; t < w.length; ++t) m(t, 0) = s.scale(bars[w.first + t].close);
  return m;
}

inline std::string dfsom_cache_key(const PipelineConfig& cfg, std::span<const CandleImage> images) {
  Fnv1a h;
  auto j = to_json(cfg)["dfsom"];
  j["seed"] = cfg.seed;
  h.update(j.dump());
  for (const auto& img : images)
    for (const Matrix* m : {&img.red, &img.green, &img.blue}) h.update(m->data());
  return h.hex();
}

}  // namespace detail

/// Trains DFSOM and GRUs on one split's training range and trades its test
/// range.
inline WindowRun run_window(const PipelineConfig& cfg, std::span<const AggBar> bars, const SplitWindow& split) {
  using clock = std::chrono::steady_clock;
  WindowRun run;
  run.split = split;
  const int wi = split.index;
  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = clock::now();
    try {
      fn();
    } catch (const Error& e) {
      throw StageError(e.kind(), wi, name, e.what());
    } catch (const std::exception& e) {
      throw StageError(ErrorKind::numeric, wi, name, e.what());
    }
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    run.stage_ms.emplace_back(name, ms);
    detail::log_info(cfg, "window " + std::to_string(wi) + " " + name + " " + fmt_double(std::round(ms)) + " ms");
  };

  std::vector<BarWindow> train_w, test_w;
  stage("schedule", [&] {
    train_w = training_windows(bars, split.train_range, cfg.bars_per_image);
    test_w = test_windows(bars, split.test_range, cfg.bars_per_image);
    if (train_w.empty()) throw DataError("no complete training windows in train range");
    if (test_w.empty()) throw DataError("no test windows in test range");
    run.max_train_timestamp = bars[train_w.back().target()].last_minute();
    run.min_test_timestamp = bars[test_w.front().target()].start_time;
    if (!(run.max_train_timestamp < run.min_test_timestamp))
      throw DataError("training data overlaps the test range");
  });
  run.train_samples = train_w.size();

  std::vector<CandleImage> train_img, test_img;
  stage("render", [&] {
    for (const auto& w : train_w) train_img.push_back(render_window(w.bars(bars), cfg.image_rows, cfg.bars_per_image));
    for (const auto& w : test_w) test_img.push_back(render_window(w.bars(bars), cfg.image_rows, cfg.bars_per_image));
  });

  stage("dfsom", [&] {
    auto dcfg = cfg.dfsom;
    dcfg.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(wi));
    std::filesystem::path cached;
    if (!cfg.cache_dir.empty()) {
      cached = std::filesystem::path(cfg.cache_dir) / ("dfsom_" + detail::dfsom_cache_key(cfg, train_img) + "_w" +
                                                       std::to_string(wi) + ".bin");
      if (std::ifstream in(cached, std::ios::binary); in) {
        run.dfsom_model = read_model(in);
        detail::log_info(cfg, "window " + std::to_string(wi) + " DFSOM loaded from cache");
        return;
      }
    }
    run.dfsom_model = train(train_img, dcfg);
    for (std::size_t l = 0; l < run.dfsom_model.layer_reports.size(); ++l)
      detail::log_info(cfg, "window " + std::to_string(wi) + " layer " + std::to_string(l) + " FSOM " +
                                std::to_string(run.dfsom_model.layer_reports[l].iterations) + " iterations");
    detail::log_info(cfg, "window " + std::to_string(wi) + " output FSOM " +
                              std::to_string(run.dfsom_model.output_report.iterations) + " iterations");
    if (!cached.empty()) {
      std::filesystem::create_directories(cfg.cache_dir);
      std::ofstream out(cached, std::ios::binary);
      write_model(out, run.dfsom_model);
    }
  });

  MinMaxScaler scaler;
  std::vector<TrainingWindow> samples;
  stage("gru", [&] {
    scaler.lo = bars[train_w.front().first].close;
    scaler.hi = scaler.lo;
    for (const auto& w : train_w)
      for (std::size_t k = w.first; k <= w.target(); ++k) {
        scaler.lo = std::min(scaler.lo, bars[k].close);
        scaler.hi = std::max(scaler.hi, bars[k].close);
      }
    for (std::size_t i = 0; i < train_w.size(); ++i)
      samples.push_back({assign_cluster(run.dfsom_model, train_img[i]), detail::close_sequence(bars, train_w[i], scaler),
                         scaler.scale(bars[train_w[i].target()].close)});
    auto gcfg = cfg.gru;
    gcfg.seed = derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(wi));
    run.gru_models = train_models(samples, gcfg);
  });

  stage("trade", [&] {
    for (std::size_t i = 0; i < test_w.size(); ++i) {
      const auto& w = test_w[i];
      const auto& target = bars[w.target()];
      PredictionRow p;
      p.cluster = assign_cluster(run.dfsom_model, test_img[i]);
      p.predicted = scaler.unscale(predict(run.gru_models, p.cluster, detail::close_sequence(bars, w, scaler)));
      p.decision_time = bars[w.last()].last_minute();
      p.close_t = bars[w.last()].close;
      p.entry_time = target.start_time;
      p.holding_minutes = cfg.period_minutes;
      p.entry_price = target.open;
      p.exit_price = target.close;
      run.predictions.push_back(p);
    }
    const auto decisions = decisions_from(run.predictions, cfg.threshold_rate);
    run.trades = simulate(decisions, cfg.fee_rate);
    run.report.index = wi;
    run.report.test_range = split.test_range;
    run.report.totals = totals_of(run.trades);
    run.report.metrics = metrics_from_totals(run.report.totals);
  });
  return run;
}

struct PipelineResult {
  std::vector<WindowRun> windows;
  std::string config_hash;
  std::string data_hash;
};

inline BarSeries load_series(const PipelineConfig& cfg) {
  std::ifstream in(cfg.data_path);
  if (!in) throw StageError(ErrorKind::data, 0, "ingest", "cannot open data file '" + cfg.data_path + "'");
  try {
    return parse_minute_bars(in, cfg.parse);
  } catch (const Error& e) {
    throw StageError(e.kind(), 0, "ingest", e.what());
  }
}

/// Writes, under the output directory: metrics.csv/json, equity.csv,
/// per-window trades, predictions and GRU loss curves, the trained model
/// bundles and manifest.json. Everything except manifest timings depends
/// only on config and data.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const BarSeries& series) {
  namespace fs = std::filesystem;
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  PipelineResult result;
  result.config_hash = config_hash(cfg);
  {
    Fnv1a h;
    for (const auto& b : series.bars()) {
      h.update(&b.timestamp.minutes, sizeof b.timestamp.minutes);
      for (double v : {b.open, b.high, b.low, b.close, b.volume}) h.update(&v, sizeof v);
    }
    result.data_hash = h.hex();
  }

  std::vector<AggBar> bars;
  std::vector<SplitWindow> schedule;
  try {
    bars = aggregate(series, cfg.period_minutes);
    schedule = make_schedule(series, cfg.train_days, cfg.test_days, cfg.window_count);
  } catch (const Error& e) {
    throw StageError(e.kind(), 0, "schedule", e.what());
  }

  const fs::path out = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out / "models", ec);
  if (ec) throw StageError(ErrorKind::config, 0, "output", "cannot create output directory " + out.string());

  for (const auto& split : schedule) {
    detail::log_info(cfg, "window " + std::to_string(split.index) + " train " + split.train_range.begin.format() +
                              " .. " + split.train_range.end.format() + " test " + split.test_range.begin.format() +
                              " .. " + split.test_range.end.format());
    result.windows.push_back(run_window(cfg, bars, split));
  }

  std::vector<WindowReport> reports;
  std::ostringstream equity;
  equity << "timestamp,cumulative_pr\n";
  double cum = 0;
  for (const auto& w : result.windows) {
    reports.push_back(w.report);
    for (const auto& t : w.trades) {
      cum += t.net_return * 100.0;
      equity << t.exit_time.format() << ',' << fmt_double(cum) << '\n';
    }
    const auto tag = "_w" + std::to_string(w.split.index);
    std::ostringstream trades, preds, loss;
    write_trade_log(trades, w.trades);
    write_predictions(preds, w.predictions);
    write_loss_curves(loss, w.gru_models);
    detail::write_file(out / ("trades" + tag + ".csv"), trades.str());
    detail::write_file(out / ("predictions" + tag + ".csv"), preds.str());
    detail::write_file(out / ("gru_loss" + tag + ".csv"), loss.str());
    {
      std::ofstream m(out / "models" / ("dfsom" + tag + ".bin"), std::ios::binary);
      write_model(m, w.dfsom_model);
      std::ofstream g(out / "models" / ("gru" + tag + ".bin"), std::ios::binary);
      write_models(g, w.gru_models);
    }
  }
  emit_report(reports, out);
  detail::write_file(out / "equity.csv", equity.str());

  json manifest = {{"config_hash", result.config_hash},
                   {"data_hash", result.data_hash},
                   {"seed", cfg.seed},
                   {"config", to_json(cfg)},
                   {"aggregated_bars", bars.size()}};
  json wins = json::array();
  bool no_leak = true;
  for (const auto& w : result.windows) {
    const bool ok = w.max_train_timestamp < w.min_test_timestamp;
    no_leak = no_leak && ok;
    json layers = json::array();
    for (const auto& r : w.dfsom_model.layer_reports)
      layers.push_back({{"iterations", r.iterations}, {"final_delta", r.final_delta}, {"converged", r.converged}});
    json timings = json::object();
    for (const auto& [name, ms] : w.stage_ms) timings[name] = ms;
    wins.push_back({{"index", w.split.index},
                    {"train_start", w.split.train_range.begin.format()},
                    {"train_end", w.split.train_range.end.format()},
                    {"test_start", w.split.test_range.begin.format()},
                    {"test_end", w.split.test_range.end.format()},
                    {"train_samples", w.train_samples},
                    {"test_samples", w.predictions.size()},
                    {"max_train_timestamp", w.max_train_timestamp.format()},
                    {"min_test_timestamp", w.min_test_timestamp.format()},
                    {"no_leakage", ok},
                    {"layer_fsom", layers},
                    {"output_fsom",
                     {{"iterations", w.dfsom_model.output_report.iterations},
                      {"final_delta", w.dfsom_model.output_report.final_delta},
                      {"converged", w.dfsom_model.output_report.converged}}},
                    {"gru_cluster_models", w.gru_models.models.size()},
                    {"timings_ms", timings}});
  }
  manifest["windows"] = wins;
  manifest["no_leakage"] = no_leak;
  manifest["total_ms"] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  detail::write_file(out / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) { return run_pipeline(cfg, load_series(cfg)); }

}  // namespace dfsom
