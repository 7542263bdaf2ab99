#pragma once

// DFSOM: parallel FSOM sampling layers over multi-scale HOG patch
// grids, spliced BMU maps zero-padded to a square, and an output FSOM that
// clusters the combined maps.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "dfsom/chart_gen.hpp"
#include "dfsom/fsom.hpp"
#include "dfsom/hog.hpp"

namespace dfsom {

struct LayerConfig {
  HogConfig hog;
  std::size_t grid_rows = 15;
  std::size_t grid_cols = 15;

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

struct DfsomConfig {
  std::vector<LayerConfig> layers{{{9, 3, 1}, 15, 15}, {{9, 6, 2}, 15, 15}};
  std::size_t output_rows = 8;
  std::size_t output_cols = 8;
  double epsilon = 1e-4;
  std::size_t max_iter = 500;
  std::uint64_t seed = 1;

  void validate() const {
    if (layers.empty()) throw ConfigError("DFSOM needs at least one parallel layer");
    for (const auto& l : layers) {
      l.hog.validate();
      if (l.grid_rows == 0 || l.grid_cols == 0) throw ConfigError("layer FSOM grid must be non-empty");
    }
    if (output_rows == 0 || output_cols == 0) throw ConfigError("output FSOM grid must be non-empty");
    if (!(epsilon > 0)) throw ConfigError("FSOM epsilon must be positive");
    if (max_iter == 0) throw ConfigError("FSOM max_iter must be >= 1");
  }
};

struct FeatureMap {
  std::vector<double> bmu_codes;
  std::size_t layer = 0;
};

struct CombinedFeatureMap {
  std::vector<double> values;  // side * side entries, zero-padded
  std::size_t original_length = 0;
  std::size_t side = 0;
};

struct DfsomModel {
  std::vector<LayerConfig> layers;
  std::vector<FsomGrid> layer_fsoms;
  FsomGrid output_fsom;
  std::vector<FitReport> layer_reports;
  FitReport output_report;
  bool trained = false;

  void require_trained() const {
    if (!trained || layer_fsoms.size() != layers.size()) throw ConfigError("DFSOM model is not trained");
  }
};

/// Smallest perfect square >= n, by search.
inline std::size_t padded_square(std::size_t n) {
  std::size_t side = 0;
  while (side * side < n) ++side;
  return side * side;
}

/// Encodes each patch's BMU as its flat lattice index scaled into [0, 1].
inline FeatureMap encode_patches(const FsomGrid& fsom, const PatchGrid& patches, std::size_t layer) {
  FeatureMap fm;
  fm.layer = layer;
  fm.bmu_codes.reserve(patches.count());
  const auto k = fsom.neuron_count();
  const double scale = k > 1 ? 1.0 / static_cast<double>(k - 1) : 0.0;
  for (std::size_t p = 0; p < patches.count(); ++p)
    fm.bmu_codes.push_back(static_cast<double>(bmu(fsom, patches.descriptor(p)).flat) * scale);
  return fm;
}

inline FeatureMap parallel_layer(const DfsomModel& model, const CandleImage& image, std::size_t layer) {
  model.require_trained();
  if (layer >= model.layers.size()) throw ConfigError("layer index out of range");
  return encode_patches(model.layer_fsoms[layer], extract_patch_grid(image, model.layers[layer].hog), layer);
}

inline CombinedFeatureMap combined_sampling(std::span<const FeatureMap> maps) {
  if (maps.empty()) throw DataError("combined sampling needs at least one feature map");
  CombinedFeatureMap c;
  for (const auto& m : maps) c.values.insert(c.values.end(), m.bmu_codes.begin(), m.bmu_codes.end());
  c.original_length = c.values.size();
  const auto padded = padded_square(c.original_length);
  c.values.resize(padded, 0.0);
  c.side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(padded))));
  return c;
}

inline CombinedFeatureMap encode_image(const DfsomModel& model, const CandleImage& image) {
  model.require_trained();
  std::vector<FeatureMap> maps;
  maps.reserve(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) maps.push_back(parallel_layer(model, image, l));
  return combined_sampling(maps);
}

/// Flat row-major index of the image's BMU on the output FSOM.
inline std::size_t assign_cluster(const DfsomModel& model, const CandleImage& image) {
  const auto combined = encode_image(model, image);
  return bmu(model.output_fsom, combined.values).flat;
}

/// Staged training: each parallel FSOM is fitted on the pooled patch
/// descriptors of every image at its scale, then the output FSOM is fitted
/// on the combined maps of every image.
inline DfsomModel train(std::span<const CandleImage> images, const DfsomConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw DataError("DFSOM training needs at least one image");
  DfsomModel model;
  model.layers = cfg.layers;

  std::vector<std::vector<PatchGrid>> grids(cfg.layers.size());
  for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
    const auto& hog = cfg.layers[l].hog;
    grids[l].reserve(images.size());
    for (const auto& img : images) grids[l].push_back(extract_patch_grid(img, hog));

    const auto per_image = grids[l].front().count();
    Matrix pool(per_image * images.size(), static_cast<std::size_t>(hog.bin_count));
    std::size_t row = 0;
    for (const auto& g : grids[l]) {
      if (g.count() != per_image) throw DataError("training images differ in shape");
      std::copy(g.descriptors.data().begin(), g.descriptors.data().end(), pool.row_ptr(row));
      row += g.count();
    }
    const auto compressed = compress_samples(pool);
    auto fsom = init_grid(cfg.layers[l].grid_rows, cfg.layers[l].grid_cols, pool.cols(), derive_seed(cfg.seed, l + 1),
                          bounds_of(compressed.samples), cfg.epsilon);
    model.layer_reports.push_back(fit(fsom, compressed.samples, cfg.max_iter, compressed.counts));
    model.layer_fsoms.push_back(std::move(fsom));
  }

  std::vector<CombinedFeatureMap> combined;
  combined.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<FeatureMap> maps;
    for (std::size_t l = 0; l < cfg.layers.size(); ++l)
      maps.push_back(encode_patches(model.layer_fsoms[l], grids[l][i], l));
    combined.push_back(combined_sampling(maps));
  }
  const auto dim = combined.front().values.size();
  Matrix x(images.size(), dim);
  for (std::size_t i = 0; i < combined.size(); ++i) std::copy(combined[i].values.begin(), combined[i].values.end(), x.row_ptr(i));
  const auto compressed = compress_samples(x);
  model.output_fsom = init_grid(cfg.output_rows, cfg.output_cols, dim, derive_seed(cfg.seed, 0),
                                bounds_of(compressed.samples), cfg.epsilon);
  model.output_report = fit(model.output_fsom, compressed.samples, cfg.max_iter, compressed.counts);
  model.trained = true;
  return model;
}

// ---------------------------------------------------------------------------
// Bundle: "DFSM" u8 version u32 layer_count, per layer (i32 bins i32 side
// i32 stride, FSOM grid), then the output FSOM grid.

inline constexpr std::uint8_t kBundleVersion = 1;

inline void write_model(std::ostream& out, const DfsomModel& model) {
  model.require_trained();
  out.write("DFSM", 4);
  io::write_pod(out, kBundleVersion);
  io::write_pod(out, static_cast<std::uint32_t>(model.layers.size()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& h = model.layers[l].hog;
    io::write_pod(out, static_cast<std::int32_t>(h.bin_count));
    io::write_pod(out, static_cast<std::int32_t>(h.window_side));
    io::write_pod(out, static_cast<std::int32_t>(h.stride));
    write_grid(out, model.layer_fsoms[l]);
  }
  write_grid(out, model.output_fsom);
}

inline DfsomModel read_model(std::istream& in) {
  io::expect_magic(in, "DFSM");
  const auto version = io::read_pod<std::uint8_t>(in);
  if (version != kBundleVersion) throw DataError("unsupported DFSOM bundle version " + std::to_string(version));
  DfsomModel m;
  const auto n = io::read_pod<std::uint32_t>(in);
  for (std::uint32_t l = 0; l < n; ++l) {
    LayerConfig lc;
    lc.hog.bin_count = io::read_pod<std::int32_t>(in);
    lc.hog.window_side = io::read_pod<std::int32_t>(in);
    lc.hog.stride = io::read_pod<std::int32_t>(in);
    auto g = read_grid(in);
    lc.grid_rows = g.rows;
    lc.grid_cols = g.cols;
    m.layers.push_back(lc);
    m.layer_fsoms.push_back(std::move(g));
  }
  m.output_fsom = read_grid(in);
  m.trained = true;
  return m;
}

}  // namespace dfsom
