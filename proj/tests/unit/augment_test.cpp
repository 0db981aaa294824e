#include <gtest/gtest.h>

#include <set>

#include "posefeat/augment.hpp"
#include "test_support.hpp"

using namespace posefeat;

TEST(Resample, FullCountIsPermutation) {
  Rng rng(1);
  const PointCloud c = test::random_cloud(100, rng, 10.0, true);
  std::vector<std::size_t> kept;
  const PointCloud r = resample(c, 100, 3, &kept);
  ASSERT_EQ(r.size(), 100u);
  EXPECT_EQ(std::set<std::size_t>(kept.begin(), kept.end()).size(), 100u);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    EXPECT_EQ(r.positions[k], c.positions[kept[k]]);
    EXPECT_EQ(r.colors[k], c.colors[kept[k]]);
  }
}

TEST(Resample, SeedsGiveDifferentSubsets) {
  Rng rng(2);
  const PointCloud c = test::random_cloud(200, rng);
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<std::size_t> a, b;
    resample(c, 100, 2 * s, &a);
    resample(c, 100, 2 * s + 1, &b);
    EXPECT_NE(a, b);
    std::vector<std::size_t> again;
    resample(c, 100, 2 * s, &again);
    EXPECT_EQ(a, again);
  }
}

TEST(Resample, InclusionFrequencyIsUniform) {
  Rng rng(3);
  const PointCloud c = test::random_cloud(50, rng);
  const std::size_t count = 20, trials = 10000;
  std::vector<int> hits(c.size(), 0);
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<std::size_t> kept;
    resample(c, count, derive_seed(1, {t}), &kept);
    for (std::size_t i : kept) ++hits[i];
  }
  const double p = static_cast<double>(count) / c.size();
  const double sigma = std::sqrt(trials * p * (1 - p));
  for (int h : hits) EXPECT_LT(std::abs(h - trials * p), 3 * sigma + 1e-9);
}

TEST(Resample, TooManyPoints) {
  Rng rng(4);
  EXPECT_THROW(resample(test::random_cloud(5, rng), 6, 0), InvalidArgument);
}

TEST(ColorJitter, IdentityFactors) {
  Rng rng(5);
  const PointCloud c = test::random_cloud(100, rng, 10.0, true);
  const PointCloud r = apply_jitter(c, JitterFactors{});
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((r.colors[i] - c.colors[i]).norm(), 1e-12);
  AugmentConfig cfg;
  cfg.brightness = cfg.contrast = cfg.saturation = cfg.hue = 0.0;
  const PointCloud d = color_jitter(c, cfg, 9);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((d.colors[i] - c.colors[i]).norm(), 1e-12);
}

TEST(ColorJitter, BrightnessDoubling) {
  PointCloud c;
  c.positions = {{0, 0, 0}};
  c.colors = {{0.3, 0.3, 0.3}};
  JitterFactors f;
  f.brightness = 2.0;
  const PointCloud r = apply_jitter(c, f);
  EXPECT_LT((r.colors[0] - Vec3(0.6, 0.6, 0.6)).norm(), 1e-12);
}

TEST(ColorJitter, FullHueTurnIsIdentity) {
  Rng rng(6);
  const PointCloud c = test::random_cloud(100, rng, 10.0, true);
  JitterFactors f;
  f.hue_turns = 1.0;
  const PointCloud r = apply_jitter(c, f);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((r.colors[i] - c.colors[i]).norm(), 1e-6);
}

TEST(ColorJitter, GeometryUntouchedAndClamped) {
  Rng rng(7);
  const PointCloud c = test::random_cloud(300, rng, 10.0, true);
  AugmentConfig cfg;
  cfg.brightness = 0.9;
  cfg.hue = 0.5;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const PointCloud r = color_jitter(c, cfg, s);
    ASSERT_EQ(r.size(), c.size());
    EXPECT_EQ(r.positions, c.positions);
    for (const Vec3& col : r.colors) {
      EXPECT_GE(col.minCoeff(), 0.0);
      EXPECT_LE(col.maxCoeff(), 1.0);
    }
  }
  EXPECT_EQ(color_jitter(c, cfg, 3).colors, color_jitter(c, cfg, 3).colors);
}

TEST(ColorJitter, Errors) {
  Rng rng(8);
  EXPECT_THROW(color_jitter(test::random_cloud(10, rng), AugmentConfig{}, 0), InvalidArgument);
  AugmentConfig bad;
  bad.contrast = 1.5;
  EXPECT_THROW(color_jitter(test::random_cloud(10, rng, 1.0, true), bad, 0), InvalidArgument);
}

TEST(RandomErase, MatchesRadiusFilter) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const PointCloud scene = test::random_cloud(1000, rng, 50.0);
    std::vector<Vec3> obj;
    for (int i = 0; i < 30; ++i) obj.emplace_back(uniform(rng, -10, 10), uniform(rng, -10, 10), uniform(rng, -10, 10));
    const EraseResult r = random_erase(scene, obj, 10.0, seed);
    const Vec3 c = scene.positions[r.center];
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < scene.size(); ++i)
      if ((scene.positions[i] - c).norm() > 10.0) want.push_back(i);
    EXPECT_EQ(r.kept, want);
    EXPECT_EQ(r.cloud.size(), want.size());
    // centre lies in the object's nearest-neighbour region
    const NeighborIndex index(scene.positions);
    bool in_region = false;
    for (const Vec3& p : obj) in_region |= index.nearest(p).id == r.center;
    EXPECT_TRUE(in_region);
  }
}

TEST(RandomErase, ZeroRadiusRemovesOnlyCentre) {
  Rng rng(11);
  const PointCloud scene = test::random_cloud(200, rng);
  const EraseResult r = random_erase(scene, {scene.positions[5]}, 0.0, 1);
  EXPECT_EQ(r.center, 5u);
  EXPECT_EQ(r.cloud.size(), 199u);
  EXPECT_FALSE(r.flagged);
}

TEST(RandomErase, HugeRadiusFlagsEmpty) {
  Rng rng(12);
  const PointCloud scene = test::random_cloud(200, rng);
  const EraseResult r = random_erase(scene, {Vec3::Zero()}, 1e6, 1);
  EXPECT_TRUE(r.cloud.empty());
  EXPECT_TRUE(r.flagged);
}

TEST(RandomErase, EmptyRegionIsFlaggedNoOp) {
  Rng rng(13);
  const PointCloud scene = test::random_cloud(50, rng);
  const EraseResult r = random_erase(scene, {}, 5.0, 1);
  EXPECT_TRUE(r.flagged);
  EXPECT_EQ(r.cloud.positions, scene.positions);
  EXPECT_THROW(random_erase(scene, {Vec3::Zero()}, -1.0, 0), InvalidArgument);
}
