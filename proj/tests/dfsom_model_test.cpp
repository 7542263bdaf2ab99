#include <gtest/gtest.h>

#include <sstream>

#include "dfsom/dfsom_model.hpp"
#include "dfsom/synthetic.hpp"
#include "fsom_oracle.hpp"

using namespace dfsom;

namespace {

std::vector<CandleImage> synthetic_images(std::size_t count) {
  SyntheticSpec spec;
  spec.days = 4;
  const auto bars = aggregate(make_synthetic_series(spec), 30);
  std::vector<CandleImage> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(render_window(std::span(bars).subspan(i, 10)));
  return out;
}

DfsomConfig small_config() {
  DfsomConfig cfg;
  cfg.layers[0].grid_rows = cfg.layers[0].grid_cols = 5;
  cfg.layers[1].grid_rows = cfg.layers[1].grid_cols = 4;
  cfg.output_rows = cfg.output_cols = 3;
  cfg.max_iter = 100;
  return cfg;
}

const DfsomModel& trained_default() {
  static const DfsomModel model = [] {
    const auto imgs = synthetic_images(12);
    return train(imgs, DfsomConfig{});
  }();
  return model;
}

}  // namespace

TEST(CombinedSampling, PaddedSquareSearch) {
  EXPECT_EQ(padded_square(0), 0u);
  EXPECT_EQ(padded_square(1), 1u);
  EXPECT_EQ(padded_square(928), 961u);
  EXPECT_EQ(padded_square(961), 961u);
  EXPECT_EQ(padded_square(962), 1024u);
}

TEST(CombinedSampling, ConcatenatesThenZeroPads) {
  std::vector<FeatureMap> maps{{std::vector<double>(784, 0.25), 0}, {std::vector<double>(144, 0.5), 1}};
  const auto c = combined_sampling(maps);
  EXPECT_EQ(c.original_length, 928u);
  EXPECT_EQ(c.side, 31u);
  ASSERT_EQ(c.values.size(), 961u);
  for (std::size_t i = 0; i < 784; ++i) EXPECT_EQ(c.values[i], 0.25);
  for (std::size_t i = 784; i < 928; ++i) EXPECT_EQ(c.values[i], 0.5);
  for (std::size_t i = 928; i < 961; ++i) EXPECT_EQ(c.values[i], 0.0);
  const auto one = combined_sampling(std::span(maps).first(1));
  EXPECT_EQ(one.side, 28u);
  EXPECT_EQ(one.values.size(), 784u);
}

TEST(DfsomModel, DefaultConfigDimensions) {
  const auto& m = trained_default();
  ASSERT_EQ(m.layer_fsoms.size(), 2u);
  EXPECT_EQ(m.layer_fsoms[0].neuron_count(), 225u);
  EXPECT_EQ(m.layer_fsoms[1].neuron_count(), 225u);
  EXPECT_EQ(m.output_fsom.neuron_count(), 64u);
  EXPECT_EQ(m.output_fsom.dim, 961u);
  for (const auto& img : synthetic_images(12)) {
    const auto c = encode_image(m, img);
    EXPECT_EQ(c.original_length, 928u);
    EXPECT_EQ(c.side, 31u);
    EXPECT_LT(assign_cluster(m, img), 64u);
  }
}

TEST(DfsomModel, CodesAreExhaustiveScanBmus) {
  const auto& m = trained_default();
  const auto img = synthetic_images(15).back();
  for (std::size_t l = 0; l < 2; ++l) {
    const auto patches = extract_patch_grid(img, m.layers[l].hog);
    const auto map = parallel_layer(m, img, l);
    ASSERT_EQ(map.bmu_codes.size(), patches.count());
    for (std::size_t p = 0; p < patches.count(); ++p) {
      const auto d = patches.descriptor(p);
      const auto j = oracle::argmin_scan(m.layer_fsoms[l].weights, std::vector<double>(d.begin(), d.end()));
      EXPECT_NEAR(map.bmu_codes[p], static_cast<double>(j) / 224.0, 1e-15);
      EXPECT_EQ(static_cast<std::size_t>(std::lround(map.bmu_codes[p] * 224.0)), j);
    }
  }
  const auto c = encode_image(m, img);
  EXPECT_EQ(assign_cluster(m, img), oracle::argmin_scan(m.output_fsom.weights, c.values));
}

TEST(DfsomModel, PoolSizesFollowPatchCounts) {
  const auto imgs = synthetic_images(3);
  std::size_t pool1 = 0, pool2 = 0;
  for (const auto& img : imgs) {
    pool1 += extract_patch_grid(img, {9, 3, 1}).count();
    pool2 += extract_patch_grid(img, {9, 6, 2}).count();
  }
  EXPECT_EQ(pool1, 784u * 3);
  EXPECT_EQ(pool2, 144u * 3);
}

TEST(DfsomModel, DeterministicForFixedSeed) {
  const auto imgs = synthetic_images(8);
  const auto a = train(imgs, small_config());
  const auto b = train(imgs, small_config());
  EXPECT_EQ(a.output_fsom, b.output_fsom);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(a.layer_fsoms[l], b.layer_fsoms[l]);
  auto other = small_config();
  other.seed = 2;
  EXPECT_NE(train(imgs, other).layer_fsoms[0].weights, a.layer_fsoms[0].weights);
}

TEST(DfsomModel, LayerOrderChangesCombinedMap) {
  const auto imgs = synthetic_images(8);
  auto swapped = small_config();
  std::swap(swapped.layers[0], swapped.layers[1]);
  const auto a = train(imgs, small_config());
  const auto b = train(imgs, swapped);
  const auto ca = encode_image(a, imgs[0]);
  const auto cb = encode_image(b, imgs[0]);
  EXPECT_EQ(ca.original_length, cb.original_length);
  EXPECT_NE(ca.values, cb.values);
}

TEST(DfsomModel, UntrainedAndMismatchedInputsRejected) {
  DfsomModel empty;
  const auto img = synthetic_images(1).front();
  EXPECT_THROW(assign_cluster(empty, img), ConfigError);
  EXPECT_THROW(train(std::span<const CandleImage>{}, small_config()), DataError);
  auto bad = small_config();
  bad.layers.clear();
  EXPECT_THROW(train(synthetic_images(2), bad), ConfigError);
}

TEST(DfsomModel, BundleRoundTrip) {
  const auto imgs = synthetic_images(6);
  const auto m = train(imgs, small_config());
  std::stringstream buf;
  write_model(buf, m);
  const auto back = read_model(buf);
  ASSERT_EQ(back.layers.size(), 2u);
  EXPECT_EQ(back.layers[1].hog, m.layers[1].hog);
  EXPECT_EQ(back.output_fsom, m.output_fsom);
  for (const auto& img : imgs) EXPECT_EQ(assign_cluster(back, img), assign_cluster(m, img));
}
