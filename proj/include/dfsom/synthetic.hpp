#pragma once

// Seeded synthetic minute bars: a linear trend plus a sine cycle plus
// Gaussian noise, sampled over fixed daily sessions.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <vector>

#include "dfsom/core.hpp"
#include "dfsom/market_data.hpp"

namespace dfsom {

struct SyntheticSpec {
  Timestamp start = Timestamp::from_civil(2020, 1, 1);
  int days = 60;
  int minutes_per_day = 240;
  int session_open_minute = 9 * 60;
  double base_price = 100.0;
  double trend_per_day = 0.05;
  double sine_amplitude = 1.5;
  double sine_period_minutes = 480.0;
  double noise_sigma = 0.08;
  double wick_sigma = 0.04;
  double base_volume = 200.0;
  std::uint64_t seed = 42;
};

inline BarSeries make_synthetic_series(const SyntheticSpec& s) {
  Rng rng(s.seed);
  std::vector<MinuteBar> bars;
  bars.reserve(static_cast<std::size_t>(s.days) * static_cast<std::size_t>(s.minutes_per_day));
  double prev_close = s.base_price;
  std::int64_t step = 0;
  for (int d = 0; d < s.days; ++d) {
    const auto day = s.start.day_start() + std::int64_t{d} * Timestamp::minutes_per_day + s.session_open_minute;
    for (int m = 0; m < s.minutes_per_day; ++m, ++step) {
      const double t = static_cast<double>(step);
      const double level = s.base_price + s.trend_per_day * t / s.minutes_per_day +
                           s.sine_amplitude * std::sin(2.0 * std::numbers::pi * t / s.sine_period_minutes);
      MinuteBar b;
      b.timestamp = day + m;
      b.open = prev_close;
      b.close = level + s.noise_sigma * rng.normal();
      b.high = std::max(b.open, b.close) + std::abs(s.wick_sigma * rng.normal());
      b.low = std::min(b.open, b.close) - std::abs(s.wick_sigma * rng.normal());
      b.volume = std::round(s.base_volume * (1.0 + 0.5 * std::abs(rng.normal())));
      prev_close = b.close;
      bars.push_back(b);
    }
  }
  return BarSeries(std::move(bars));
}

inline void write_minute_bars(std::ostream& out, const BarSeries& series) {
  for (const auto& b : series.bars())
    out << b.timestamp.format() << ',' << fmt_double(b.open) << ',' << fmt_double(b.high) << ','
        << fmt_double(b.low) << ',' << fmt_double(b.close) << ',' << fmt_double(b.volume) << '\n';
}

}  // namespace dfsom
