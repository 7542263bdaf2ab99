#pragma once

// Batch fuzzy self-organizing map.
//
// Every sample belongs to every neuron with membership proportional to the
// inverse squared Euclidean distance. Each iteration moves every neuron to
// the membership-weighted mean of the samples; training stops once no
// weight component moves by epsilon or more. There is no lattice
// neighbourhood kernel; the lattice only gives BMU positions a 2-D address.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "dfsom/core.hpp"

namespace dfsom {

struct GridIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t flat = 0;

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

struct FsomGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t dim = 0;
  Matrix weights;  // neuron j (row-major lattice order) is row j
  double epsilon = 1e-4;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;  // completed by the last fit

  std::size_t neuron_count() const { return rows * cols; }
  std::span<const double> weight(std::size_t j) const { return {weights.row_ptr(j), dim}; }
  GridIndex index_of(std::size_t flat) const { return {flat / cols, flat % cols, flat}; }

  friend bool operator==(const FsomGrid&, const FsomGrid&) = default;
};

/// Componentwise range of a sample set, used to seed weights.
struct DataBounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

inline DataBounds bounds_of(const Matrix& samples) {
  DataBounds b{std::vector<double>(samples.cols(), std::numeric_limits<double>::infinity()),
               std::vector<double>(samples.cols(), -std::numeric_limits<double>::infinity())};
  for (std::size_t l = 0; l < samples.rows(); ++l)
    for (std::size_t i = 0; i < samples.cols(); ++i) {
      b.lo[i] = std::min(b.lo[i], samples(l, i));
      b.hi[i] = std::max(b.hi[i], samples(l, i));
    }
  return b;
}

/// Weights drawn uniformly from `bounds` when given, else from [0, 1).
inline FsomGrid init_grid(std::size_t rows, std::size_t cols, std::size_t dim, std::uint64_t seed,
                          const std::optional<DataBounds>& bounds = std::nullopt, double epsilon = 1e-4) {
  if (rows == 0 || cols == 0 || dim == 0) throw ConfigError("FSOM grid extents and dimension must be >= 1");
  if (bounds && (bounds->lo.size() != dim || bounds->hi.size() != dim))
    throw ConfigError("FSOM init bounds do not match dimension");
  FsomGrid g;
  g.rows = rows;
  g.cols = cols;
  g.dim = dim;
  g.epsilon = epsilon;
  g.seed = seed;
  g.weights = Matrix(rows * cols, dim);
  Rng rng(seed);
  for (std::size_t j = 0; j < rows * cols; ++j)
    for (std::size_t i = 0; i < dim; ++i)
      g.weights(j, i) = bounds ? rng.uniform(bounds->lo[i], bounds->hi[i]) : rng.uniform();
  return g;
}

struct MembershipRow {
  std::vector<double> memberships;
  std::vector<double> distances;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Fills `r` with memberships from squared distances. Scaling by the
/// smallest squared distance keeps the ratios finite for near-hits.
inline void memberships_from_sq(std::span<const double> sq, std::span<double> r) {
  std::size_t nearest = 0;
  for (std::size_t j = 1; j < sq.size(); ++j)
    if (sq[j] < sq[nearest]) nearest = j;
  const double dmin = sq[nearest];
  if (dmin == 0.0) {
    std::fill(r.begin(), r.end(), 0.0);
    r[nearest] = 1.0;
    return;
  }
  double total = 0;
  for (std::size_t j = 0; j < sq.size(); ++j) {
    r[j] = dmin / sq[j];
    total += r[j];
  }
  for (auto& v : r) v /= total;
}

}  // namespace detail

inline MembershipRow memberships(const FsomGrid& grid, std::span<const double> sample) {
  if (sample.size() != grid.dim) throw DataError("sample dimension does not match FSOM");
  const auto k = grid.neuron_count();
  MembershipRow row{std::vector<double>(k), std::vector<double>(k)};
  std::vector<double> sq(k);
  for (std::size_t j = 0; j < k; ++j) {
    sq[j] = detail::squared_distance(sample, grid.weight(j));
    row.distances[j] = std::sqrt(sq[j]);
  }
  detail::memberships_from_sq(sq, row.memberships);
  return row;
}

/// Best matching unit; ties go to the lowest row-major index.
inline GridIndex bmu(const FsomGrid& grid, std::span<const double> sample) {
  if (sample.size() != grid.dim) throw DataError("sample dimension does not match FSOM");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid.neuron_count(); ++j) {
    const double d = detail::squared_distance(sample, grid.weight(j));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return grid.index_of(best);
}

/// One batch step over all samples, optionally with per-sample
/// multiplicities. Returns the largest absolute weight-component change.
/// A neuron that received no membership at all keeps its weights.
inline double batch_update(FsomGrid& grid, const Matrix& samples, std::span<const double> multiplicity = {}) {
  if (samples.rows() == 0) throw DataError("batch update needs at least one sample");
  if (samples.cols() != grid.dim) throw DataError("sample dimension does not match FSOM");
  if (!multiplicity.empty() && multiplicity.size() != samples.rows())
    throw DataError("multiplicity length does not match sample count");
  const auto k = grid.neuron_count();
  const auto dim = grid.dim;
  Matrix pull(k, dim);  // sum_l R_lj (X_l - W_j)
  std::vector<double> mass(k, 0.0);
  std::vector<double> sq(k), r(k);
  for (std::size_t l = 0; l < samples.rows(); ++l) {
    const std::span<const double> x{samples.row_ptr(l), dim};
    for (std::size_t j = 0; j < k; ++j) sq[j] = detail::squared_distance(x, grid.weight(j));
    detail::memberships_from_sq(sq, r);
    const double w = multiplicity.empty() ? 1.0 : multiplicity[l];
    for (std::size_t j = 0; j < k; ++j) {
      const double rw = r[j] * w;
      if (rw == 0.0) continue;
      mass[j] += rw;
      double* p = pull.row_ptr(j);
      const double* wj = grid.weights.row_ptr(j);
      for (std::size_t i = 0; i < dim; ++i) p[i] += rw * (x[i] - wj[i]);
    }
  }
  double max_delta = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (mass[j] == 0.0) continue;
    double* wj = grid.weights.row_ptr(j);
    const double* p = pull.row_ptr(j);
    for (std::size_t i = 0; i < dim; ++i) {
      const double step = p[i] / mass[j];
      wj[i] += step;
      max_delta = std::max(max_delta, std::abs(step));
      if (!std::isfinite(wj[i])) return std::numeric_limits<double>::quiet_NaN();
    }
  }
  return max_delta;
}

struct FitReport {
  std::size_t iterations = 0;
  double final_delta = 0;
  bool converged = false;
};

/// Iterates batch updates until the largest weight change falls below the
/// grid's epsilon or `max_iter` updates have run.
inline FitReport fit(FsomGrid& grid, const Matrix& samples, std::size_t max_iter,
                     std::span<const double> multiplicity = {}) {
  if (samples.rows() == 0) throw DataError("FSOM fit needs at least one sample");
  if (max_iter == 0) throw ConfigError("FSOM max_iter must be >= 1");
  for (double v : samples.data())
    if (!std::isfinite(v)) throw NumericError("non-finite value in FSOM training data");
  FitReport rep;
  while (rep.iterations < max_iter) {
    rep.final_delta = batch_update(grid, samples, multiplicity);
    ++rep.iterations;
    if (!std::isfinite(rep.final_delta))
      throw NumericError("FSOM weights became non-finite at iteration " + std::to_string(rep.iterations));
    if (rep.final_delta < grid.epsilon) {
      rep.converged = true;
      break;
    }
  }
  grid.iterations = rep.iterations;
  return rep;
}

/// Collapses duplicate rows into (unique rows, counts). Rows come out in
/// lexicographic order, so the result does not depend on input order.
/// Batch updates on the compressed set equal those on the full set up to
/// summation order.
struct CompressedSamples {
  Matrix samples;
  std::vector<double> counts;
};

inline CompressedSamples compress_samples(const Matrix& samples) {
  std::map<std::vector<double>, double> uniq;
  for (std::size_t l = 0; l < samples.rows(); ++l)
    uniq[std::vector<double>(samples.row_ptr(l), samples.row_ptr(l) + samples.cols())] += 1.0;
  CompressedSamples out{Matrix(uniq.size(), samples.cols()), {}};
  out.counts.reserve(uniq.size());
  std::size_t l = 0;
  for (const auto& [row, count] : uniq) {
    std::copy(row.begin(), row.end(), out.samples.row_ptr(l++));
    out.counts.push_back(count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: "DFSG" u32 rows u32 cols u32 dim f64 epsilon u64 seed
// u32 iterations, then row-major f64 weights.

inline void write_grid(std::ostream& out, const FsomGrid& g) {
  out.write("DFSG", 4);
  io::write_pod(out, static_cast<std::uint32_t>(g.rows));
  io::write_pod(out, static_cast<std::uint32_t>(g.cols));
  io::write_pod(out, static_cast<std::uint32_t>(g.dim));
  io::write_pod(out, g.epsilon);
  io::write_pod(out, g.seed);
  io::write_pod(out, static_cast<std::uint32_t>(g.iterations));
  io::write_doubles(out, g.weights.data());
}

inline FsomGrid read_grid(std::istream& in) {
  io::expect_magic(in, "DFSG");
  FsomGrid g;
  g.rows = io::read_pod<std::uint32_t>(in);
  g.cols = io::read_pod<std::uint32_t>(in);
  g.dim = io::read_pod<std::uint32_t>(in);
  g.epsilon = io::read_pod<double>(in);
  g.seed = io::read_pod<std::uint64_t>(in);
  g.iterations = io::read_pod<std::uint32_t>(in);
  g.weights = Matrix(g.rows * g.cols, g.dim);
  io::read_doubles(in, g.weights.data());
  return g;
}

}  // namespace dfsom
