#pragma once

// Threshold trading rules, one-window holding simulation and the nine
// performance metrics.

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dfsom/core.hpp"

namespace dfsom {

enum class Signal { none, long_position, short_position };

enum class Direction { long_position, short_position };

inline const char* to_string(Direction d) { return d == Direction::long_position ? "long" : "short"; }

struct SignalThresholds {
  double long_threshold = 0;
  double short_threshold = 0;

  static SignalThresholds around(double close_t, double rate) {
    return {close_t * (1.0 + rate), close_t * (1.0 - rate)};
  }
};

/// Long above close*(1+rate), short below close*(1-rate), otherwise no-op.
/// Both comparisons are strict.
inline Signal decide(double predicted_next, double close_t, double rate) {
  const auto th = SignalThresholds::around(close_t, rate);
  if (predicted_next > th.long_threshold) return Signal::long_position;
  if (predicted_next < th.short_threshold) return Signal::short_position;
  return Signal::none;
}

struct Trade {
  Direction direction = Direction::long_position;
  Timestamp entry_time;
  Timestamp exit_time;
  double entry_price = 0;
  double exit_price = 0;
  double fee_rate = 0;
  double net_return = 0;  // fraction, fee deducted once per round trip
};

inline double gross_return(Direction d, double entry, double exit) {
  return d == Direction::long_position ? (exit - entry) / entry : (entry - exit) / entry;
}

inline Trade make_trade(Direction d, Timestamp entry_time, Timestamp exit_time, double entry, double exit,
                        double fee_rate) {
  return {d, entry_time, exit_time, entry, exit, fee_rate, gross_return(d, entry, exit) - fee_rate};
}

/// One decision point: the signal made at the close of window t and the
/// prices of window t+1 it would trade.
struct Decision {
  Signal signal = Signal::none;
  Timestamp entry_time;
  std::int64_t holding_minutes = 0;
  std::optional<double> entry_price;  // open of window t+1
  std::optional<double> exit_price;   // close of window t+1
};

using TradeLog = std::vector<Trade>;

/// One trade per non-none signal, each held for exactly one window.
/// Decisions must be time-ordered and spaced at least one holding period
/// apart, so positions never overlap.
inline TradeLog simulate(std::span<const Decision> decisions, double fee_rate) {
  TradeLog log;
  std::optional<Timestamp> busy_until;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    if (i > 0 && d.entry_time < decisions[i - 1].entry_time) throw DataError("decisions are not time-ordered");
    if (d.signal == Signal::none) continue;
    if (!d.entry_price || !d.exit_price || !(*d.entry_price > 0) || !(*d.exit_price > 0))
      throw DataError("missing price data for signal at " + d.entry_time.format());
    if (busy_until && d.entry_time < *busy_until)
      throw DataError("overlapping position at " + d.entry_time.format());
    const auto dir = d.signal == Signal::long_position ? Direction::long_position : Direction::short_position;
    const auto exit_time = d.entry_time + d.holding_minutes;
    log.push_back(make_trade(dir, d.entry_time, exit_time, *d.entry_price, *d.exit_price, fee_rate));
    busy_until = exit_time;
  }
  return log;
}

/// PR, avg_profit and avg_loss are percentages; accuracy is a fraction.
/// Ratios that would divide by zero are absent.
struct MetricsReport {
  double pr = 0;
  std::size_t tn = 0;
  std::size_t tn_plus = 0;
  std::size_t tn_minus = 0;
  std::optional<double> avg_return;
  std::optional<double> avg_profit;
  std::optional<double> avg_loss;
  std::optional<double> pl_ratio;
  std::optional<double> accuracy;
};

/// Aggregate trade statistics that fully determine a MetricsReport.
struct TradeTotals {
  std::size_t tn_plus = 0;
  std::size_t tn_minus = 0;
  double total_profit = 0;  // sum of positive net returns, fraction
  double total_loss = 0;    // sum of non-positive net returns, fraction (<= 0)
};

inline MetricsReport metrics_from_totals(const TradeTotals& t) {
  MetricsReport r;
  r.tn_plus = t.tn_plus;
  r.tn_minus = t.tn_minus;
  r.tn = t.tn_plus + t.tn_minus;
  r.pr = (t.total_profit + t.total_loss) * 100.0;
  if (r.tn > 0) {
    r.avg_return = r.pr / static_cast<double>(r.tn);
    r.accuracy = static_cast<double>(r.tn_plus) / static_cast<double>(r.tn);
  }
  if (r.tn_plus > 0) r.avg_profit = t.total_profit / static_cast<double>(r.tn_plus) * 100.0;
  if (r.tn_minus > 0) r.avg_loss = t.total_loss / static_cast<double>(r.tn_minus) * 100.0;
  if (r.avg_loss && *r.avg_loss != 0.0) r.pl_ratio = r.avg_profit.value_or(0.0) / std::abs(*r.avg_loss);
  return r;
}

/// Zero-return trades count as non-profitable.
inline TradeTotals totals_of(std::span<const Trade> log) {
  TradeTotals t;
  for (const auto& tr : log) {
    if (tr.net_return > 0) {
      ++t.tn_plus;
      t.total_profit += tr.net_return;
    } else {
      ++t.tn_minus;
      t.total_loss += tr.net_return;
    }
  }
  return t;
}

inline MetricsReport report(std::span<const Trade> log) { return metrics_from_totals(totals_of(log)); }

inline void write_trade_log(std::ostream& out, std::span<const Trade> log) {
  out << "direction,entry_time,exit_time,entry_price,exit_price,net_return\n";
  for (const auto& t : log)
    out << to_string(t.direction) << ',' << t.entry_time.format() << ',' << t.exit_time.format() << ','
        << fmt_double(t.entry_price) << ',' << fmt_double(t.exit_price) << ',' << fmt_double(t.net_return) << '\n';
}

}  // namespace dfsom
