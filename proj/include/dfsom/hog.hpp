#pragma once

// Histogram-of-oriented-gradients descriptors over sliding square windows.
//
// Pixel (x, y) is column x, row y. Gradients use central differences with
// replicated edges, orientations are unsigned angles folded into [0, 180)
// and each window's descriptor is an unweighted count of per-pixel bins.

#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <vector>

#include "dfsom/chart_gen.hpp"
#include "dfsom/core.hpp"

namespace dfsom {

struct GrayImage {
  Matrix pixels;

  std::size_t rows() const { return pixels.rows(); }
  std::size_t cols() const { return pixels.cols(); }
};

struct HogConfig {
  int bin_count = 9;
  int window_side = 3;
  int stride = 1;

  double bin_span() const { return 180.0 / bin_count; }

  void validate() const {
    if (bin_count < 1) throw ConfigError("HOG bin_count must be >= 1");
    if (window_side < 1) throw ConfigError("HOG window_side must be >= 1");
    if (stride < 1) throw ConfigError("HOG stride must be >= 1");
  }

  friend bool operator==(const HogConfig&, const HogConfig&) = default;
};

struct PatchGrid {
  Matrix descriptors;  // one row per window, bin_count columns
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;

  std::size_t count() const { return n_rows * n_cols; }
  std::span<const double> descriptor(std::size_t i) const {
    return {descriptors.row_ptr(i), descriptors.cols()};
  }
};

inline GrayImage to_grayscale(const CandleImage& image) {
  if (!image.red.same_shape(image.green) || !image.red.same_shape(image.blue))
    throw DataError("channel matrices differ in shape");
  GrayImage g{Matrix(image.rows(), image.cols())};
  auto& out = g.pixels.data();
  const auto& r = image.red.data();
  const auto& gr = image.green.data();
  const auto& b = image.blue.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.3 * r[i] + 0.59 * gr[i] + 0.11 * b[i];
  return g;
}

struct Gradients {
  Matrix gx;
  Matrix gy;
};

inline Gradients gradients(const GrayImage& gray) {
  const auto rows = gray.rows();
  const auto cols = gray.cols();
  if (rows < 3 || cols < 3) throw DataError("gradient needs an image of at least 3x3");
  const Matrix& img = gray.pixels;
  Gradients g{Matrix(rows, cols), Matrix(rows, cols)};
  for (std::size_t y = 0; y < rows; ++y) {
    const auto up = y + 1 < rows ? y + 1 : y;
    const auto down = y > 0 ? y - 1 : y;
    for (std::size_t x = 0; x < cols; ++x) {
      const auto right = x + 1 < cols ? x + 1 : x;
      const auto left = x > 0 ? x - 1 : x;
      g.gx(y, x) = img(y, right) - img(y, left);
      g.gy(y, x) = img(up, x) - img(down, x);
    }
  }
  return g;
}

/// Unsigned gradient angle in degrees, in [0, 180). Zero gradient gives 0.
inline double orientation_degrees(double gx, double gy) {
  if (gx == 0.0 && gy == 0.0) return 0.0;
  double theta = std::atan2(gy, gx) * (180.0 / std::numbers::pi);
  if (theta < 0) theta += 180.0;
  if (theta >= 180.0) theta -= 180.0;
  return theta;
}

inline int orientation_bin(double gx, double gy, const HogConfig& cfg) {
  const auto bin = static_cast<int>(std::floor(orientation_degrees(gx, gy) / cfg.bin_span()));
  return std::clamp(bin, 0, cfg.bin_count - 1);
}

/// Per-pixel bin indices, same shape as the gradients.
inline std::vector<int> orientation_bins(const Matrix& gx, const Matrix& gy, const HogConfig& cfg) {
  if (!gx.same_shape(gy)) throw DataError("gradient matrices differ in shape");
  std::vector<int> bins(gx.size());
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i] = orientation_bin(gx.data()[i], gy.data()[i], cfg);
  return bins;
}

/// Number of window positions along an axis of `extent` pixels:
/// ceil((extent - side) / stride) + 1.
inline std::size_t placement_count(std::size_t extent, std::size_t side, std::size_t stride) {
  if (side > extent) return 0;
  return (extent - side + stride - 1) / stride + 1;
}

/// Window start offsets along one axis. A final window that would overrun
/// is shifted back to end flush with the border.
inline std::vector<std::size_t> placements(std::size_t extent, std::size_t side, std::size_t stride) {
  std::vector<std::size_t> starts;
  const auto n = placement_count(extent, side, stride);
  starts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) starts.push_back(std::min(i * stride, extent - side));
  return starts;
}

inline PatchGrid extract_patch_grid(const GrayImage& gray, const HogConfig& cfg) {
  cfg.validate();
  const auto side = static_cast<std::size_t>(cfg.window_side);
  if (side > gray.rows() || side > gray.cols())
    throw ConfigError("HOG window " + std::to_string(side) + " exceeds image " + std::to_string(gray.rows()) +
                      "x" + std::to_string(gray.cols()));
  const auto grad = gradients(gray);
  const auto bins = orientation_bins(grad.gx, grad.gy, cfg);
  const auto row_starts = placements(gray.rows(), side, static_cast<std::size_t>(cfg.stride));
  const auto col_starts = placements(gray.cols(), side, static_cast<std::size_t>(cfg.stride));

  PatchGrid grid;
  grid.n_rows = row_starts.size();
  grid.n_cols = col_starts.size();
  grid.descriptors = Matrix(grid.count(), static_cast<std::size_t>(cfg.bin_count));
  std::size_t idx = 0;
  for (auto r0 : row_starts) {
    for (auto c0 : col_starts) {
      double* hist = grid.descriptors.row_ptr(idx++);
      for (auto y = r0; y < r0 + side; ++y)
        for (auto x = c0; x < c0 + side; ++x) hist[bins[y * gray.cols() + x]] += 1.0;
    }
  }
  return grid;
}

inline PatchGrid extract_patch_grid(const CandleImage& image, const HogConfig& cfg) {
  return extract_patch_grid(to_grayscale(image), cfg);
}

// ---------------------------------------------------------------------------
// Descriptor cache: "DFHG" u32 image_rows u32 image_cols u32 bins
// u32 window_side u32 stride u32 n_rows u32 n_cols, then f64 histograms.

inline void write_patch_grid(std::ostream& out, const PatchGrid& grid, std::size_t image_rows,
                             std::size_t image_cols, const HogConfig& cfg) {
  out.write("DFHG", 4);
  for (auto v : {image_rows, image_cols, static_cast<std::size_t>(cfg.bin_count),
                 static_cast<std::size_t>(cfg.window_side), static_cast<std::size_t>(cfg.stride), grid.n_rows,
                 grid.n_cols})
    io::write_pod(out, static_cast<std::uint32_t>(v));
  io::write_doubles(out, grid.descriptors.data());
}

struct PatchGridFile {
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
  HogConfig config;
  PatchGrid grid;
};

inline PatchGridFile read_patch_grid(std::istream& in) {
  io::expect_magic(in, "DFHG");
  PatchGridFile f;
  f.image_rows = io::read_pod<std::uint32_t>(in);
  f.image_cols = io::read_pod<std::uint32_t>(in);
  f.config.bin_count = static_cast<int>(io::read_pod<std::uint32_t>(in));
  f.config.window_side = static_cast<int>(io::read_pod<std::uint32_t>(in));
  f.config.stride = static_cast<int>(io::read_pod<std::uint32_t>(in));
  f.grid.n_rows = io::read_pod<std::uint32_t>(in);
  f.grid.n_cols = io::read_pod<std::uint32_t>(in);
  f.grid.descriptors = Matrix(f.grid.count(), static_cast<std::size_t>(f.config.bin_count));
  io::read_doubles(in, f.grid.descriptors.data());
  return f;
}

}  // namespace dfsom
