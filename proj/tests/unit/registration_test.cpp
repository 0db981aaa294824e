#include <gtest/gtest.h>

#include "../common/registration_suite.hpp"
#include "posefeat/registration.hpp"
#include "test_support.hpp"

using namespace posefeat;

namespace {

FeatureMatrix random_features(Eigen::Index n, Eigen::Index f, Rng& rng) {
  FeatureMatrix m(n, f);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng, 1.0);
  return m;
}

MatchSet identity_matches(std::size_t n) {
  MatchSet m;
  for (std::size_t i = 0; i < n; ++i) m.pairs.push_back({i, i, 0.0});
  return m;
}

}  // namespace

TEST(MatchFeatures, IdenticalSets) {
  Rng rng(1);
  const FeatureMatrix f = random_features(50, 8, rng);
  const MatchSet m = match_features(f, f);
  ASSERT_EQ(m.size(), 50u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m.pairs[i].scene_id, i);
    EXPECT_EQ(m.pairs[i].distance, 0.0);
  }
}

TEST(MatchFeatures, OneHotPermutation) {
  Rng rng(2);
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureMatrix obj = FeatureMatrix::Zero(16, 16), scn = FeatureMatrix::Zero(16, 16);
  for (std::size_t i = 0; i < 16; ++i) {
    obj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    scn(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(i)) = 1.0;
  }
  const MatchSet m = match_features(obj, scn, {true, 1});
  ASSERT_EQ(m.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(m.pairs[i].scene_id, perm[i]);
}

TEST(MatchFeatures, MatchesArgminOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const FeatureMatrix a = random_features(300, 8, rng), b = random_features(400, 8, rng);
    const MatchSet m = match_features(a, b, {false, 2});
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      Eigen::Index best = 0;
      double bd = 1e300;
      for (Eigen::Index j = 0; j < b.rows(); ++j) {
        const double d = (a.row(i) - b.row(j)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      EXPECT_EQ(m.pairs[static_cast<std::size_t>(i)].scene_id, static_cast<std::size_t>(best));
    }
  }
}

TEST(MatchFeatures, TieGoesToLowestId) {
  FeatureMatrix a(1, 1), b(3, 1);
  a << 0.0;
  b << 2.0, -1.0, 1.0;
  EXPECT_EQ(match_features(a, b).pairs[0].scene_id, 1u);
}

TEST(MatchFeatures, MutualFilter) {
  FeatureMatrix a(2, 1), b(1, 1);
  a << 0.0, 0.4;
  b << 0.5;
  const MatchSet m = match_features(a, b, {true, 1});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.pairs[0].object_id, 1u);
  EXPECT_THROW(match_features(FeatureMatrix(0, 1), b), InvalidArgument);
  EXPECT_THROW(match_features(a, FeatureMatrix::Zero(2, 3)), InvalidArgument);
}

TEST(Ransac, NoiselessRecovery) {
  Rng rng(3);
  const PointCloud obj = test::random_cloud(200, rng);
  const RigidPose gt = test::random_pose(rng);
  const PointCloud scn = transform_cloud(obj, gt);
  RansacConfig cfg;
  cfg.max_iterations = 50;
  const RansacResult r = ransac_register(obj, scn, identity_matches(200), cfg);
  const PoseErrors e = pose_errors(r.pose, gt);
  EXPECT_LT(e.rre, 1e-6);
  EXPECT_LT(10 * e.rte_cm, 1e-3);
  EXPECT_EQ(r.inliers.size(), 200u);
}

TEST(Ransac, SeventyPercentInliers) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const PointCloud obj = test::random_cloud(300, rng, 50.0);
    const RigidPose gt = test::random_pose(rng);
    PointCloud scn = transform_cloud(obj, gt);
    for (Vec3& p : scn.positions) p += Vec3(normal(rng, 1.0), normal(rng, 1.0), normal(rng, 1.0));
    MatchSet m = identity_matches(300);
    for (Match& x : m.pairs)
      if (uniform01(rng) < 0.3) x.scene_id = uniform_index(rng, 300);
    RansacConfig cfg;
    cfg.max_iterations = 1000;
    cfg.inlier_threshold = 5.0;
    cfg.seed = seed;
    const RansacResult r = ransac_register(obj, scn, m, cfg);
    const PoseErrors e = pose_errors(r.pose, gt);
    ok += e.rre < 0.05 && 10 * e.rte_cm < 5.0;
  }
  EXPECT_GE(ok, 48);
}

TEST(Ransac, InliersRespectThresholdAndDeterministic) {
  Rng rng(4);
  const PointCloud obj = test::random_cloud(300, rng, 50.0);
  const RigidPose gt = test::random_pose(rng);
  PointCloud scn = transform_cloud(obj, gt);
  for (Vec3& p : scn.positions) p += Vec3(normal(rng, 2.0), normal(rng, 2.0), normal(rng, 2.0));
  MatchSet m = identity_matches(300);
  for (Match& x : m.pairs)
    if (uniform01(rng) < 0.5) x.scene_id = uniform_index(rng, 300);
  RansacConfig cfg;
  cfg.seed = 9;
  const RansacResult a = ransac_register(obj, scn, m, cfg);
  for (std::size_t k : a.inliers)
    EXPECT_LT((a.pose.apply(obj.positions[m.pairs[k].object_id]) - scn.positions[m.pairs[k].scene_id]).norm(),
              cfg.inlier_threshold);
  cfg.jobs = 3;
  const RansacResult b = ransac_register(obj, scn, m, cfg);
  EXPECT_EQ(a.pose.rotation, b.pose.rotation);
  EXPECT_EQ(a.pose.translation, b.pose.translation);
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Ransac, EquivariantUnderSceneMotion) {
  Rng rng(5);
  const PointCloud obj = test::random_cloud(200, rng, 50.0);
  const RigidPose gt = test::random_pose(rng);
  PointCloud scn = transform_cloud(obj, gt);
  for (Vec3& p : scn.positions) p += Vec3(normal(rng, 1.0), normal(rng, 1.0), normal(rng, 1.0));
  MatchSet m = identity_matches(200);
  for (Match& x : m.pairs)
    if (uniform01(rng) < 0.3) x.scene_id = uniform_index(rng, 200);
  const RigidPose q = test::random_pose(rng);
  RansacConfig cfg;
  cfg.seed = 3;
  const RansacResult a = ransac_register(obj, scn, m, cfg);
  const RansacResult b = ransac_register(obj, transform_cloud(scn, q), m, cfg);
  const RigidPose want = q * a.pose;
  EXPECT_LT((b.pose.rotation - want.rotation).norm(), 1e-6);
  EXPECT_LT((b.pose.translation - want.translation).norm(), 1e-6);
}

TEST(Ransac, RandomMatchesFailOrFlag) {
  Rng rng(6);
  const PointCloud obj = test::random_cloud(300, rng, 100.0);
  const PointCloud scn = test::random_cloud(300, rng, 100.0);
  MatchSet m;
  for (std::size_t i = 0; i < 300; ++i) m.pairs.push_back({i, uniform_index(rng, 300), 0.0});
  RansacConfig cfg;
  cfg.max_iterations = 500;
  cfg.inlier_threshold = 2.0;
  try {
    const RansacResult r = ransac_register(obj, scn, m, cfg);
    EXPECT_LT(r.inlier_ratio, 0.1);
  } catch (const RegistrationFailure&) {
    SUCCEED();
  }
}

TEST(Ransac, Errors) {
  Rng rng(7);
  const PointCloud obj = test::random_cloud(10, rng);
  EXPECT_THROW(ransac_register(obj, obj, identity_matches(2), RansacConfig{}), InvalidArgument);
  MatchSet bad = identity_matches(3);
  bad.pairs[0].scene_id = 50;
  EXPECT_THROW(ransac_register(obj, obj, bad, RansacConfig{}), InvalidArgument);
  RansacConfig c;
  c.inlier_threshold = 0;
  EXPECT_THROW(ransac_register(obj, obj, identity_matches(5), c), InvalidArgument);
}

TEST(Ransac, SyntheticSuiteSmoke) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) ok += test::run_registration_trial(seed).ok;
  EXPECT_GE(ok, 7);
}
