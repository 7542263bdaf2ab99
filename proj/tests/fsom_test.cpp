#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "dfsom/fsom.hpp"
#include "fsom_oracle.hpp"

using namespace dfsom;

namespace {

Matrix random_samples(std::size_t n, std::size_t dim, Rng& rng, double scale = 1.0) {
  Matrix m(n, dim);
  for (auto& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST(Memberships, InverseSquareRatios) {
  FsomGrid g = init_grid(1, 2, 1, 0);
  g.weights(0, 0) = 1;  // d = 1
  g.weights(1, 0) = 2;  // d = 2
  const std::vector<double> x{0};
  const auto m = memberships(g, x);
  EXPECT_NEAR(m.memberships[0], 0.8, 1e-15);
  EXPECT_NEAR(m.memberships[1], 0.2, 1e-15);
  EXPECT_EQ(m.distances[1], 2.0);
}

TEST(Memberships, ExactHitIsCrisp) {
  FsomGrid g = init_grid(2, 2, 2, 3);
  const std::vector<double> x(g.weight(2).begin(), g.weight(2).end());
  const auto m = memberships(g, x);
  EXPECT_EQ(m.memberships, (std::vector<double>{0, 0, 1, 0}));
  g.weights = Matrix(4, 2, 0.5);
  const std::vector<double> hit{0.5, 0.5};
  EXPECT_EQ(memberships(g, hit).memberships[0], 1.0);
}

TEST(Memberships, SimplexAndArgmaxMatchesNearest) {
  Rng rng(17);
  const auto g = init_grid(3, 4, 5, 9);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x(5);
    for (auto& v : x) v = rng.uniform(-2, 2);
    const auto m = memberships(g, x);
    double s = 0;
    for (double r : m.memberships) {
      EXPECT_GE(r, 0.0);
      s += r;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    const auto arg = std::max_element(m.memberships.begin(), m.memberships.end()) - m.memberships.begin();
    const auto near = std::min_element(m.distances.begin(), m.distances.end()) - m.distances.begin();
    EXPECT_EQ(arg, near);
  }
}

TEST(BatchUpdate, SingleNeuronSingleSampleJumps) {
  FsomGrid g = init_grid(1, 1, 3, 1);
  const std::vector<double> w0(g.weight(0).begin(), g.weight(0).end());
  Matrix x(1, 3);
  x(0, 0) = 5, x(0, 1) = -1, x(0, 2) = 0.25;
  const double delta = batch_update(g, x);
  double want = 0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(g.weights(0, i), x(0, i));
    want = std::max(want, std::abs(x(0, i) - w0[i]));
  }
  EXPECT_DOUBLE_EQ(delta, want);
}

TEST(BatchUpdate, FixedPointHasZeroDelta) {
  FsomGrid g = init_grid(1, 1, 2, 1);
  Matrix x(4, 2);
  for (std::size_t l = 0; l < 4; ++l) x(l, 0) = g.weights(0, 0), x(l, 1) = g.weights(0, 1);
  EXPECT_EQ(batch_update(g, x), 0.0);
}

TEST(BatchUpdate, EqualsMembershipWeightedMean) {
  Rng rng(23);
  for (int inst = 0; inst < 100; ++inst) {
    const auto samples = random_samples(30, 4, rng, 3.0);
    FsomGrid g = init_grid(2, 3, 4, 100 + inst, bounds_of(samples));
    const auto want = oracle::weighted_means(g.weights, samples);
    batch_update(g, samples);
    for (std::size_t k = 0; k < want.data().size(); ++k)
      EXPECT_NEAR(g.weights.data()[k], want.data()[k], 1e-12 * std::max(1.0, std::abs(want.data()[k])));
  }
}

TEST(BatchUpdate, SampleOrderDoesNotMatter) {
  Rng rng(4);
  const auto samples = random_samples(50, 3, rng);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[3], perm[40]);
  Matrix shuffled(50, 3);
  for (std::size_t l = 0; l < 50; ++l) std::copy_n(samples.row_ptr(perm[l]), 3, shuffled.row_ptr(l));
  FsomGrid a = init_grid(3, 3, 3, 5), b = a;
  batch_update(a, samples);
  batch_update(b, shuffled);
  for (std::size_t k = 0; k < a.weights.data().size(); ++k)
    EXPECT_NEAR(a.weights.data()[k], b.weights.data()[k], 1e-12);
}

TEST(BatchUpdate, CompressedSamplesMatchExpandedSet) {
  Rng rng(8);
  Matrix samples(200, 3);
  for (auto& v : samples.data()) v = std::floor(rng.uniform() * 3);
  const auto c = compress_samples(samples);
  EXPECT_LE(c.samples.rows(), 27u);
  EXPECT_EQ(std::accumulate(c.counts.begin(), c.counts.end(), 0.0), 200.0);
  FsomGrid a = init_grid(2, 2, 3, 6, bounds_of(samples)), b = a;
  fit(a, samples, 50);
  fit(b, c.samples, 50, c.counts);
  for (std::size_t k = 0; k < a.weights.data().size(); ++k)
    EXPECT_NEAR(a.weights.data()[k], b.weights.data()[k], 1e-9);
}

TEST(BatchUpdate, RejectsBadInput) {
  FsomGrid g = init_grid(1, 2, 2, 1);
  EXPECT_THROW(batch_update(g, Matrix(0, 2)), DataError);
  EXPECT_THROW(batch_update(g, Matrix(3, 5)), DataError);
  EXPECT_THROW(init_grid(0, 2, 2, 1), ConfigError);
}

TEST(Fit, TwoCloudsMatchIndependentFixedPoint) {
  const auto samples = oracle::two_clouds(200, 0.05, 1.0, 31);
  FsomGrid g = init_grid(1, 2, 2, 12, bounds_of(samples), 1e-13);
  const auto init = g.weights;
  const auto rep = fit(g, samples, 5000);
  EXPECT_TRUE(rep.converged);
  const auto want = oracle::fixed_point(init, samples, 1e-15, 100000);
  for (std::size_t k = 0; k < want.data().size(); ++k) EXPECT_NEAR(g.weights.data()[k], want.data()[k], 1e-6);
  // one neuron near each cloud
  const double x0 = g.weights(0, 0), x1 = g.weights(1, 0);
  EXPECT_NEAR(std::min(x0, x1), 0.0, 0.1);
  EXPECT_NEAR(std::max(x0, x1), 1.0, 0.1);
}

TEST(Fit, LargeEpsilonStopsAfterOneIteration) {
  Rng rng(2);
  const auto samples = random_samples(20, 2, rng);
  FsomGrid g = init_grid(2, 2, 2, 3, std::nullopt, 1e9);
  const auto rep = fit(g, samples, 100);
  EXPECT_EQ(rep.iterations, 1u);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(g.iterations, 1u);
}

TEST(Fit, DuplicateSamplesSingleNeuron) {
  Matrix x(5, 2, 0.75);
  FsomGrid g = init_grid(1, 1, 2, 4);
  fit(g, x, 10);
  EXPECT_EQ(g.weights(0, 0), 0.75);
  EXPECT_EQ(g.weights(0, 1), 0.75);
}

TEST(Fit, MaxIterCapAndNonFiniteInput) {
  Rng rng(1);
  const auto samples = random_samples(40, 2, rng);
  FsomGrid g = init_grid(3, 3, 2, 3, std::nullopt, 0.0);
  const auto rep = fit(g, samples, 7);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 7u);
  Matrix bad(2, 2, 1.0);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fit(g, bad, 3), NumericError);
}

TEST(Bmu, MatchesExhaustiveScanAndTieBreak) {
  Rng rng(19);
  const auto g = init_grid(15, 15, 9, 77);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> x(9);
    for (auto& v : x) v = rng.uniform();
    EXPECT_EQ(bmu(g, x).flat, oracle::argmin_scan(g.weights, x));
  }
  const std::vector<double> hit(g.weight(2 * 15 + 3).begin(), g.weight(2 * 15 + 3).end());
  const auto at = bmu(g, hit);
  EXPECT_EQ(at.row, 2u);
  EXPECT_EQ(at.col, 3u);
  FsomGrid flat = g;
  flat.weights = Matrix(225, 9, 0.1);
  EXPECT_EQ(bmu(flat, std::vector<double>(9, 0.3)), (GridIndex{0, 0, 0}));
}

TEST(Serialization, GridRoundTrip) {
  FsomGrid g = init_grid(3, 2, 4, 55, std::nullopt, 3e-5);
  g.iterations = 12;
  std::stringstream buf;
  write_grid(buf, g);
  EXPECT_EQ(read_grid(buf), g);
  std::stringstream junk("XXXX");
  EXPECT_THROW(read_grid(junk), DataError);
}
