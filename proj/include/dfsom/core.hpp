#pragma once

// Shared building blocks: dense matrix, error taxonomy, timestamps,
// deterministic random numbers and little-endian binary IO.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <cstdlib>
#include <iomanip>
#include <numbers>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace dfsom {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind { config = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// ---------------------------------------------------------------------------
// Matrix

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Timestamps

/// Minute-resolution wall-clock time, counted from 1970-01-01T00:00 in the
/// exchange's local time. No timezone arithmetic is performed.
struct Timestamp {
  std::int64_t minutes = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

  Timestamp operator+(std::int64_t m) const { return {minutes + m}; }
  Timestamp operator-(std::int64_t m) const { return {minutes - m}; }

  static constexpr std::int64_t minutes_per_day = 24 * 60;

  static Timestamp from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0) {
    using namespace std::chrono;
    const sys_days d{year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}};
    return {static_cast<std::int64_t>(d.time_since_epoch().count()) * minutes_per_day + hour * 60 + minute};
  }

  /// Midnight of the same calendar day.
  Timestamp day_start() const {
    auto d = minutes / minutes_per_day;
    if (minutes % minutes_per_day < 0) --d;
    return {d * minutes_per_day};
  }

  std::tm to_tm() const {
    using namespace std::chrono;
    const auto start = day_start();
    const year_month_day ymd{sys_days{days{start.minutes / minutes_per_day}}};
    const auto rem = minutes - start.minutes;
    std::tm t{};
    t.tm_year = static_cast<int>(ymd.year()) - 1900;
    t.tm_mon = static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
    t.tm_mday = static_cast<int>(static_cast<unsigned>(ymd.day()));
    t.tm_hour = static_cast<int>(rem / 60);
    t.tm_min = static_cast<int>(rem % 60);
    return t;
  }

  std::string format(const char* fmt = "%Y-%m-%dT%H:%M") const {
    const std::tm t = to_tm();
    char buf[64];
    const auto n = std::strftime(buf, sizeof buf, fmt, &t);
    return std::string(buf, n);
  }

  /// Parses `text` with a strftime-style format; returns false on mismatch
  /// or trailing garbage.
  static bool parse(std::string_view text, const std::string& fmt, Timestamp& out) {
    std::tm t{};
    std::istringstream in{std::string(text)};
    in >> std::get_time(&t, fmt.c_str());
    if (in.fail()) return false;
    in >> std::ws;
    if (!in.eof()) return false;
    if (t.tm_mon < 0 || t.tm_mon > 11 || t.tm_mday < 1 || t.tm_mday > 31) return false;
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{t.tm_year + 1900}, std::chrono::month{static_cast<unsigned>(t.tm_mon + 1)},
                             std::chrono::day{static_cast<unsigned>(t.tm_mday)}};
    if (!ymd.ok()) return false;
    out = from_civil(t.tm_year + 1900, static_cast<unsigned>(t.tm_mon + 1), static_cast<unsigned>(t.tm_mday),
                     t.tm_hour, t.tm_min);
    return true;
  }
};

/// Half-open interval [begin, end).
struct TimeRange {
  Timestamp begin;
  Timestamp end;

  bool contains(Timestamp t) const { return begin <= t && t < end; }
  friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

// ---------------------------------------------------------------------------
// Random numbers

/// SplitMix64. Its output sequence is fixed by definition, unlike the
/// standard distributions, so seeded runs are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    spare_ = rad * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return rad * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent stream seed from a base seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  Rng r(base ^ (tag * 0xD1B54A32D192ED03ull));
  r.next();
  return r.next();
}

// ---------------------------------------------------------------------------
// Hashing

/// 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001B3ull;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(const std::vector<double>& v) { update(v.data(), v.size() * sizeof(double)); }

  std::uint64_t digest() const noexcept { return h_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ull;
};

// ---------------------------------------------------------------------------
// Binary IO (little-endian hosts only; the formats are documented as LE)

namespace io {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated binary stream");
  return v;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::istream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw DataError("truncated binary stream");
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw DataError("bad file signature, expected " + std::string(magic));
}

}  // namespace io

/// Shortest round-trippable decimal form, used for all text reports so
/// output bytes depend only on the values.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace dfsom
