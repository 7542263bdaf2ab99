#pragma once

// Minute-bar ingestion, N-minute aggregation, walk-forward schedules and
// image-window slicing.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "dfsom/core.hpp"

namespace dfsom {

struct MinuteBar {
  Timestamp timestamp;
  double open = 0;
  double high = 0;
  double low = 0;
  double close = 0;
  double volume = 0;

  friend bool operator==(const MinuteBar&, const MinuteBar&) = default;
};

/// Empty string when the bar satisfies the OHLCV invariants, otherwise the
/// name of the first violated constraint.
inline std::string ohlc_violation(const MinuteBar& b) {
  for (double p : {b.open, b.high, b.low, b.close})
    if (!std::isfinite(p) || p <= 0) return "prices must be positive and finite";
  if (b.low > b.high) return "high < low";
  if (b.open < b.low || b.open > b.high) return "open outside [low, high]";
  if (b.close < b.low || b.close > b.high) return "close outside [low, high]";
  if (!std::isfinite(b.volume) || b.volume < 0) return "volume must be non-negative";
  return {};
}

/// Validated, strictly time-ordered minute series. Immutable once built.
class BarSeries {
 public:
  BarSeries() = default;

  /// Throws DataError if any bar breaks an invariant.
  explicit BarSeries(std::vector<MinuteBar> bars) : bars_(std::move(bars)) {
    for (std::size_t i = 0; i < bars_.size(); ++i) {
      if (auto why = ohlc_violation(bars_[i]); !why.empty())
        throw DataError("bar " + std::to_string(i) + ": " + why);
      if (i > 0 && !(bars_[i - 1].timestamp < bars_[i].timestamp))
        throw DataError("bar " + std::to_string(i) + ": timestamps not strictly increasing");
    }
  }

  std::span<const MinuteBar> bars() const noexcept { return bars_; }
  std::size_t size() const noexcept { return bars_.size(); }
  bool empty() const noexcept { return bars_.empty(); }
  const MinuteBar& operator[](std::size_t i) const { return bars_[i]; }
  const MinuteBar& front() const { return bars_.front(); }
  const MinuteBar& back() const { return bars_.back(); }

 private:
  std::vector<MinuteBar> bars_;
};

struct ParseOptions {
  char delimiter = ',';
  bool has_header = false;
  std::string timestamp_format = "%Y-%m-%dT%H:%M";
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Reads timestamp,open,high,low,close,volume rows. Row numbers in error
/// messages are 1-based physical line numbers.
inline BarSeries parse_minute_bars(std::istream& in, const ParseOptions& opts = {}) {
  static constexpr const char* field_names[] = {"timestamp", "open", "high", "low", "close", "volume"};
  std::vector<MinuteBar> bars;
  std::string line;
  std::size_t row = 0;
  bool header_pending = opts.has_header;
  while (std::getline(in, line)) {
    ++row;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
      const auto next = text.find(opts.delimiter, pos);
      fields.push_back(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    const auto where = "row " + std::to_string(row);
    if (fields.size() != 6)
      throw DataError(where + ": expected 6 fields, found " + std::to_string(fields.size()));
    MinuteBar b;
    if (!Timestamp::parse(detail::trim(fields[0]), opts.timestamp_format, b.timestamp))
      throw DataError(where + ", field timestamp: cannot parse '" + std::string(fields[0]) + "'");
    double* targets[] = {&b.open, &b.high, &b.low, &b.close, &b.volume};
    for (std::size_t f = 1; f < 6; ++f)
      if (!detail::parse_number(fields[f], *targets[f - 1]))
        throw DataError(where + ", field " + field_names[f] + ": not a number '" + std::string(fields[f]) + "'");
    if (auto why = ohlc_violation(b); !why.empty()) throw DataError(where + ": " + why);
    if (!bars.empty() && !(bars.back().timestamp < b.timestamp))
      throw DataError(where + ": timestamp " + b.timestamp.format() + " does not follow " +
                      bars.back().timestamp.format());
    bars.push_back(b);
  }
  if (bars.empty()) throw DataError("no minute bars in input");
  return BarSeries(std::move(bars));
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggBar {
  Timestamp start_time;
  double open = 0;
  double high = 0;
  double low = 0;
  double close = 0;
  double volume = 0;
  std::vector<MinuteBar> minutes;

  Timestamp last_minute() const { return minutes.back().timestamp; }
};

/// Groups consecutive rows `period` at a time; a trailing partial group is
/// dropped. Calendar gaps are not inspected.
inline std::vector<AggBar> aggregate(const BarSeries& series, int period) {
  if (period <= 0) throw ConfigError("aggregation period must be positive, got " + std::to_string(period));
  const auto n = static_cast<std::size_t>(period);
  if (series.size() < n)
    throw DataError("series has " + std::to_string(series.size()) + " rows, fewer than one period of " +
                    std::to_string(period));
  std::vector<AggBar> out;
  out.reserve(series.size() / n);
  for (std::size_t start = 0; start + n <= series.size(); start += n) {
    const auto group = series.bars().subspan(start, n);
    AggBar a;
    a.start_time = group.front().timestamp;
    a.open = group.front().open;
    a.close = group.back().close;
    a.high = group.front().high;
    a.low = group.front().low;
    for (const auto& m : group) {
      a.high = std::max(a.high, m.high);
      a.low = std::min(a.low, m.low);
      a.volume += m.volume;
    }
    a.minutes.assign(group.begin(), group.end());
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Walk-forward schedule

struct SplitWindow {
  TimeRange train_range;
  TimeRange test_range;
  int index = 0;  // 1-based
};

/// Test ranges tile the period after the first `train_days` contiguously;
/// each train range is the `train_days` immediately before its test range.
/// Day boundaries are anchored at midnight of the first bar's day.
inline std::vector<SplitWindow> make_schedule(const BarSeries& series, int train_days, int test_days, int count) {
  if (train_days <= 0 || test_days <= 0) throw ConfigError("train and test spans must be positive");
  if (count < 0) throw ConfigError("window count must be non-negative");
  std::vector<SplitWindow> out;
  if (count == 0) return out;
  if (series.empty()) throw DataError("cannot schedule an empty series");
  const auto day = Timestamp::minutes_per_day;
  const auto origin = series.front().timestamp.day_start();
  for (int i = 0; i < count; ++i) {
    SplitWindow w;
    w.index = i + 1;
    w.test_range.begin = origin + (static_cast<std::int64_t>(train_days) + std::int64_t{i} * test_days) * day;
    w.test_range.end = w.test_range.begin + std::int64_t{test_days} * day;
    w.train_range.begin = w.test_range.begin - std::int64_t{train_days} * day;
    w.train_range.end = w.test_range.begin;
    out.push_back(w);
  }
  if (series.back().timestamp < out.back().test_range.begin)
    throw DataError("insufficient data: series ends " + series.back().timestamp.format() + " before test window " +
                    std::to_string(count) + " begins " + out.back().test_range.begin.format());
  return out;
}

// ---------------------------------------------------------------------------
// Image windows

/// A run of `length` aggregated bars starting at `first`, followed by the
/// target bar at `first + length`.
struct BarWindow {
  std::size_t first = 0;
  std::size_t length = 0;

  std::size_t last() const { return first + length - 1; }
  std::size_t target() const { return first + length; }

  std::span<const AggBar> bars(std::span<const AggBar> all) const { return all.subspan(first, length); }
};

/// Windows whose bars and target bar all lie inside `range`.
inline std::vector<BarWindow> training_windows(std::span<const AggBar> bars, const TimeRange& range,
                                               std::size_t length) {
  std::vector<BarWindow> out;
  for (std::size_t k = 0; k + length < bars.size(); ++k) {
    if (bars[k].start_time < range.begin) continue;
    if (!(bars[k + length].last_minute() < range.end)) break;
    out.push_back({k, length});
  }
  return out;
}

/// Windows whose target bar starts inside `range`. The input bars may
/// precede the range; they are history at decision time.
inline std::vector<BarWindow> test_windows(std::span<const AggBar> bars, const TimeRange& range,
                                           std::size_t length) {
  std::vector<BarWindow> out;
  for (std::size_t k = 0; k + length < bars.size(); ++k)
    if (range.contains(bars[k + length].start_time)) out.push_back({k, length});
  return out;
}

/// Every window of `length` bars with a following target bar.
inline std::vector<BarWindow> all_windows(std::span<const AggBar> bars, std::size_t length) {
  std::vector<BarWindow> out;
  for (std::size_t k = 0; k + length < bars.size(); ++k) out.push_back({k, length});
  return out;
}

}  // namespace dfsom
