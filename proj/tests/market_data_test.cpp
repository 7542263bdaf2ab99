#include <gtest/gtest.h>

#include <sstream>

#include "dfsom/market_data.hpp"
#include "dfsom/synthetic.hpp"

using namespace dfsom;

namespace {

std::string minute_rows(int n, Timestamp start = Timestamp::from_civil(2020, 5, 18, 9, 1)) {
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    const double base = 4100 + i;
    out << (start + i).format() << ',' << base << ',' << base + 5 << ',' << base - 2 << ',' << base + 3 << ','
        << 250 + i << '\n';
  }
  return out.str();
}

BarSeries series_of(int n) {
  std::istringstream in(minute_rows(n));
  return parse_minute_bars(in);
}

}  // namespace

TEST(ParseMinuteBars, MapsSixFields) {
  std::istringstream in("2020-05-18T09:01,4100,4105,4098,4103,250\n");
  const auto s = parse_minute_bars(in);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].timestamp, Timestamp::from_civil(2020, 5, 18, 9, 1));
  EXPECT_EQ(s[0].open, 4100);
  EXPECT_EQ(s[0].high, 4105);
  EXPECT_EQ(s[0].low, 4098);
  EXPECT_EQ(s[0].close, 4103);
  EXPECT_EQ(s[0].volume, 250);
}

TEST(ParseMinuteBars, RejectsHighBelowLowNamingRow) {
  std::istringstream in("2020-05-18T09:01,4100,4105,4098,4103,250\n2020-05-18T09:02,4100,4090,4098,4095,1\n");
  try {
    parse_minute_bars(in);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("high < low"), std::string::npos) << e.what();
  }
}

TEST(ParseMinuteBars, ReportsMalformedField) {
  std::istringstream in("2020-05-18T09:01,4100,abc,4098,4103,250\n");
  try {
    parse_minute_bars(in);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1, field high"), std::string::npos) << e.what();
  }
  std::istringstream bad_ts("18/05/2020 09:01,1,1,1,1,1\n");
  EXPECT_THROW(parse_minute_bars(bad_ts), DataError);
  std::istringstream short_row("2020-05-18T09:01,1,1,1,1\n");
  EXPECT_THROW(parse_minute_bars(short_row), DataError);
}

TEST(ParseMinuteBars, RejectsNonMonotonicAndEmpty) {
  std::istringstream dup("2020-05-18T09:01,1,1,1,1,1\n2020-05-18T09:01,1,1,1,1,1\n");
  EXPECT_THROW(parse_minute_bars(dup), DataError);
  std::istringstream empty("");
  EXPECT_THROW(parse_minute_bars(empty), DataError);
  std::istringstream header_only("timestamp,open,high,low,close,volume\n");
  EXPECT_THROW(parse_minute_bars(header_only, {',', true, "%Y-%m-%dT%H:%M"}), DataError);
}

TEST(ParseMinuteBars, HeaderDelimiterAndFormatOptions) {
  std::istringstream in("time;o;h;l;c;v\n2020/05/18 09:01;10;11;9;10.5;3\n");
  const auto s = parse_minute_bars(in, {';', true, "%Y/%m/%d %H:%M"});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].close, 10.5);
}

TEST(ParseMinuteBars, ThreeHundredRowsOrdered) {
  const auto s = series_of(300);
  EXPECT_EQ(s.size(), 300u);
  EXPECT_EQ(s.front().timestamp, Timestamp::from_civil(2020, 5, 18, 9, 1));
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i - 1].timestamp, s[i].timestamp);
}

TEST(Aggregate, ExactDivisionAndTruncation) {
  const auto a = aggregate(series_of(90), 30);
  ASSERT_EQ(a.size(), 3u);
  for (const auto& b : a) EXPECT_EQ(b.minutes.size(), 30u);
  EXPECT_EQ(aggregate(series_of(95), 30).size(), 3u);
}

TEST(Aggregate, OhlcvDefinitions) {
  std::istringstream in(
      "2020-05-18T09:01,10,10,9,9.5,1\n"
      "2020-05-18T09:02,9.5,12,9.5,11,2\n"
      "2020-05-18T09:03,11,11,8,10.5,4\n");
  const auto a = aggregate(parse_minute_bars(in), 3);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].open, 10);
  EXPECT_EQ(a[0].high, 12);
  EXPECT_EQ(a[0].low, 8);
  EXPECT_EQ(a[0].close, 10.5);
  EXPECT_EQ(a[0].volume, 7);
  EXPECT_EQ(a[0].start_time, Timestamp::from_civil(2020, 5, 18, 9, 1));
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate(series_of(10), 0), ConfigError);
  EXPECT_THROW(aggregate(series_of(10), -5), ConfigError);
  EXPECT_THROW(aggregate(series_of(10), 30), DataError);
}

TEST(Aggregate, FlatteningReproducesPrefixAndVolumeSums) {
  SyntheticSpec spec;
  spec.days = 3;
  spec.minutes_per_day = 97;
  const auto s = make_synthetic_series(spec);
  for (int period : {1, 7, 30, 60}) {
    const auto agg = aggregate(s, period);
    std::size_t k = 0;
    for (const auto& b : agg) {
      double vol = 0;
      for (const auto& m : b.minutes) {
        EXPECT_EQ(m, s[k++]);
        vol += m.volume;
      }
      EXPECT_NEAR(b.volume, vol, 1e-9 * std::max(1.0, vol));
    }
    EXPECT_EQ(k, s.size() / static_cast<std::size_t>(period) * static_cast<std::size_t>(period));
  }
}

TEST(Schedule, SixWindowSpans) {
  // Daily rows from 2020-05-18 through 2020-11-26.
  std::vector<MinuteBar> bars;
  for (auto t = Timestamp::from_civil(2020, 5, 18, 9); t < Timestamp::from_civil(2020, 11, 27); t = t + 1440)
    bars.push_back({t, 1, 1, 1, 1, 1});
  const BarSeries s(std::move(bars));
  const auto w = make_schedule(s, 105, 14, 6);
  ASSERT_EQ(w.size(), 6u);
  EXPECT_EQ(w[0].train_range.begin, Timestamp::from_civil(2020, 5, 18));
  EXPECT_EQ(w[0].test_range.begin, Timestamp::from_civil(2020, 8, 31));
  EXPECT_EQ(w[0].test_range.end, Timestamp::from_civil(2020, 9, 14));
  EXPECT_EQ(w[1].test_range.begin, Timestamp::from_civil(2020, 9, 14));
  EXPECT_EQ(w[1].test_range.end, Timestamp::from_civil(2020, 9, 28));
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(w[i].index, static_cast<int>(i + 1));
    EXPECT_EQ(w[i].train_range.end, w[i].test_range.begin);
    if (i > 0) {
      EXPECT_EQ(w[i - 1].test_range.end, w[i].test_range.begin);
    }
  }
}

TEST(Schedule, CountsAndErrors) {
  SyntheticSpec spec;
  spec.days = 130;
  spec.minutes_per_day = 2;
  const auto s = make_synthetic_series(spec);
  const auto two = make_schedule(s, 105, 14, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1].train_range.end, two[1].test_range.begin);
  EXPECT_TRUE(make_schedule(s, 105, 14, 0).empty());
  EXPECT_THROW(make_schedule(s, 105, 14, 3), DataError);
  EXPECT_THROW(make_schedule(s, 0, 14, 1), ConfigError);
}

TEST(Windows, TrainingAndTestWindowsNeverLeak) {
  SyntheticSpec spec;
  spec.days = 40;
  const auto s = make_synthetic_series(spec);
  const auto bars = aggregate(s, 30);
  for (const auto& split : make_schedule(s, 20, 7, 2)) {
    const auto train = training_windows(bars, split.train_range, 10);
    const auto test = test_windows(bars, split.test_range, 10);
    ASSERT_FALSE(train.empty());
    ASSERT_FALSE(test.empty());
    for (const auto& w : train) {
      for (std::size_t k = w.first; k <= w.target(); ++k) {
        EXPECT_TRUE(split.train_range.contains(bars[k].start_time));
        EXPECT_FALSE(split.test_range.contains(bars[k].last_minute()));
      }
    }
    for (const auto& w : test) EXPECT_TRUE(split.test_range.contains(bars[w.target()].start_time));
    EXPECT_LT(bars[train.back().target()].last_minute(), bars[test.front().target()].start_time);
  }
}
