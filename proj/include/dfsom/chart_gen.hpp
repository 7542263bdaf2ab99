#pragma once

// Extended candlestick images: falling K-lines on the red channel, rising
// on green, per-price-level traded volume on blue.

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>

#include "dfsom/core.hpp"
#include "dfsom/market_data.hpp"

namespace dfsom {

inline constexpr double kBodyValue = 1.0;
inline constexpr double kShadowValue = 0.5;
inline constexpr std::size_t kBarsPerImage = 10;

struct CandleImage {
  Matrix red;
  Matrix green;
  Matrix blue;
  double price_min = 0;
  double price_max = 0;

  CandleImage() = default;
  CandleImage(std::size_t rows, std::size_t cols) : red(rows, cols), green(rows, cols), blue(rows, cols) {}

  std::size_t rows() const { return red.rows(); }
  std::size_t cols() const { return red.cols(); }

  /// Row of `price` under the image's linear price axis: price_min maps to
  /// row 0, price_max to the last row, rounding half up. A flat axis maps
  /// everything to the middle row.
  std::size_t row_of(double price) const {
    const auto top = static_cast<double>(rows() - 1);
    if (!(price_max > price_min)) return rows() / 2;
    const double pos = top * (price - price_min) / (price_max - price_min);
    return static_cast<std::size_t>(std::clamp(std::floor(pos + 0.5), 0.0, top));
  }

  friend bool operator==(const CandleImage&, const CandleImage&) = default;
};

namespace detail {

inline void fill_rows(Matrix& m, double a, double b, std::size_t col, double value, const CandleImage& img) {
  auto lo = img.row_of(a);
  auto hi = img.row_of(b);
  if (lo > hi) std::swap(lo, hi);
  for (auto r = lo; r <= hi; ++r) m(r, col) = value;
}

}  // namespace detail

/// Paints one K-line. Shadows are drawn first and the body over them, so
/// rows shared by body and shadow keep the body value.
inline void draw_kline(CandleImage& image, const AggBar& bar, std::size_t column) {
  const bool falling = bar.open > bar.close;
  Matrix& channel = falling ? image.red : image.green;
  const double body_top = std::max(bar.open, bar.close);
  const double body_bottom = std::min(bar.open, bar.close);
  detail::fill_rows(channel, body_top, bar.high, column, kShadowValue, image);
  detail::fill_rows(channel, bar.low, body_bottom, column, kShadowValue, image);
  detail::fill_rows(channel, body_bottom, body_top, column, kBodyValue, image);
}

/// Spreads each constituent minute's volume evenly over the rows of its
/// [low, high] span, then rescales the column so its maximum is 1.
inline void paint_volume(CandleImage& image, const AggBar& bar, std::size_t column) {
  for (const auto& m : bar.minutes) {
    const auto lo = image.row_of(m.low);
    const auto hi = image.row_of(m.high);
    const double share = m.volume / static_cast<double>(hi - lo + 1);
    for (auto r = lo; r <= hi; ++r) image.blue(r, column) += share;
  }
  double peak = 0;
  for (std::size_t r = 0; r < image.rows(); ++r) peak = std::max(peak, image.blue(r, column));
  if (peak > 0)
    for (std::size_t r = 0; r < image.rows(); ++r) image.blue(r, column) /= peak;
}

/// Renders one image column per bar. The price axis spans the window's
/// lowest low to highest high.
inline CandleImage render_window(std::span<const AggBar> bars, std::size_t rows = 100,
                                 std::size_t expected_bars = kBarsPerImage) {
  if (bars.size() != expected_bars)
    throw DataError("render_window needs " + std::to_string(expected_bars) + " bars, got " +
                    std::to_string(bars.size()));
  if (rows < 2) throw ConfigError("image needs at least 2 rows");
  CandleImage img(rows, bars.size());
  img.price_min = bars.front().low;
  img.price_max = bars.front().high;
  for (const auto& b : bars) {
    img.price_min = std::min(img.price_min, b.low);
    img.price_max = std::max(img.price_max, b.high);
  }
  for (std::size_t c = 0; c < bars.size(); ++c) {
    draw_kline(img, bars[c], c);
    paint_volume(img, bars[c], c);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Binary cache layout: "DFCI" u32 rows u32 cols f64 price_min f64 price_max,
// then R, G, B row-major f64.

inline void write_image(std::ostream& out, const CandleImage& img) {
  out.write("DFCI", 4);
  io::write_pod(out, static_cast<std::uint32_t>(img.rows()));
  io::write_pod(out, static_cast<std::uint32_t>(img.cols()));
  io::write_pod(out, img.price_min);
  io::write_pod(out, img.price_max);
  for (const Matrix* m : {&img.red, &img.green, &img.blue}) io::write_doubles(out, m->data());
}

inline CandleImage read_image(std::istream& in) {
  io::expect_magic(in, "DFCI");
  const auto rows = io::read_pod<std::uint32_t>(in);
  const auto cols = io::read_pod<std::uint32_t>(in);
  CandleImage img(rows, cols);
  img.price_min = io::read_pod<double>(in);
  img.price_max = io::read_pod<double>(in);
  for (Matrix* m : {&img.red, &img.green, &img.blue}) io::read_doubles(in, m->data());
  return img;
}

}  // namespace dfsom
