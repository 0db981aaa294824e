#include <gtest/gtest.h>

#include "posefeat/mining.hpp"
#include "test_support.hpp"

using namespace posefeat;

TEST(MinePositives, ExactCopy) {
  Rng rng(1);
  const PointCloud obj = test::random_cloud(300, rng);
  const RigidPose gt = test::random_pose(rng);
  const PointCloud scn = transform_cloud(obj, gt);
  const CorrespondenceSet c = mine_positives(obj, scn, gt, 4.0, kUnlimitedPairs, 0);
  ASSERT_EQ(c.size(), obj.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    EXPECT_EQ(c.pairs[k].object_id, k);
    EXPECT_EQ(c.pairs[k].scene_id, k);
    EXPECT_LT(c.pairs[k].distance, 1e-9);
  }
}

TEST(MinePositives, ThresholdEdge) {
  PointCloud obj, scn;
  obj.positions = {{0, 0, 0}, {100, 0, 0}};
  scn.positions = {{5, 0, 0}, {100, 3.9, 0}};
  const CorrespondenceSet c = mine_positives(obj, scn, RigidPose::identity(), 4.0, kUnlimitedPairs, 0);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.pairs[0].object_id, 1u);
  PointCloud exact;
  exact.positions = {{4, 0, 0}};
  PointCloud single;
  single.positions = {{0, 0, 0}};
  EXPECT_THROW(mine_positives(single, exact, RigidPose::identity(), 4.0, kUnlimitedPairs, 0), MiningError);
}

TEST(MinePositives, MatchesLinearScan) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const PointCloud obj = test::random_cloud(200, rng, 30.0);
    const PointCloud scn = test::random_cloud(400, rng, 30.0);
    const RigidPose gt = test::random_pose(rng, 5.0);
    const CorrespondenceSet c = mine_positives(obj, scn, gt, 6.0, kUnlimitedPairs, seed);
    std::vector<Correspondence> want;
    for (std::size_t i = 0; i < obj.size(); ++i) {
      const Vec3 x = gt.apply(obj.positions[i]);
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t j = 0; j < scn.size(); ++j) {
        const double d = (scn.positions[j] - x).squaredNorm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (std::sqrt(bd) < 6.0) want.push_back({i, best, std::sqrt(bd)});
    }
    ASSERT_EQ(c.size(), want.size());
    for (std::size_t k = 0; k < want.size(); ++k) {
      EXPECT_EQ(c.pairs[k].object_id, want[k].object_id);
      EXPECT_EQ(c.pairs[k].scene_id, want[k].scene_id);
      EXPECT_EQ(c.pairs[k].distance, want[k].distance);
    }
  }
}

TEST(MinePositives, CapAndDeterminism) {
  Rng rng(2);
  const PointCloud obj = test::random_cloud(500, rng);
  const PointCloud scn = transform_cloud(obj, RigidPose::identity());
  const CorrespondenceSet a = mine_positives(obj, scn, RigidPose::identity(), 4.0, 100, 7);
  const CorrespondenceSet b = mine_positives(obj, scn, RigidPose::identity(), 4.0, 100, 7);
  const CorrespondenceSet c = mine_positives(obj, scn, RigidPose::identity(), 4.0, 100, 8);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.pairs[k].object_id, b.pairs[k].object_id);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) differs |= a.pairs[k].object_id != c.pairs[k].object_id;
  EXPECT_TRUE(differs);
  for (std::size_t k = 1; k < a.size(); ++k) EXPECT_LT(a.pairs[k - 1].object_id, a.pairs[k].object_id);
}

TEST(MinePositives, InvariantUnderCommonRigidMotion) {
  Rng rng(3);
  const PointCloud obj = test::random_cloud(200, rng, 30.0);
  const PointCloud scn = test::random_cloud(500, rng, 30.0);
  const RigidPose gt = test::random_pose(rng, 3.0);
  const RigidPose extra = test::random_pose(rng);
  const CorrespondenceSet a = mine_positives(obj, scn, gt, 5.0, kUnlimitedPairs, 0);
  const CorrespondenceSet b = mine_positives(obj, transform_cloud(scn, extra), extra * gt, 5.0, kUnlimitedPairs, 0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.pairs[k].object_id, b.pairs[k].object_id);
    EXPECT_EQ(a.pairs[k].scene_id, b.pairs[k].scene_id);
  }
}

TEST(MinePositives, Errors) {
  PointCloud one;
  one.positions = {{0, 0, 0}};
  EXPECT_THROW(mine_positives(PointCloud{}, one, RigidPose::identity(), 4.0, 10, 0), InvalidArgument);
  EXPECT_THROW(mine_positives(one, one, RigidPose::identity(), 0.0, 10, 0), InvalidArgument);
}

TEST(NegativeCandidates, ZeroScaleKeepsAllOthers) {
  Rng rng(4);
  const PointCloud obj = test::random_cloud(100, rng);
  const CorrespondenceSet pos = mine_positives(obj, obj, RigidPose::identity(), 1.0, kUnlimitedPairs, 0);
  const NegativeCandidates n = build_negative_candidates(obj, obj, pos, 0.0, 100.0, 10000, 1);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    EXPECT_EQ(n.object_side[k].size(), obj.size() - 1);
    EXPECT_EQ(n.scene_side[k].size(), obj.size() - 1);
    EXPECT_EQ(std::count(n.object_side[k].begin(), n.object_side[k].end(), pos.pairs[k].object_id), 0);
  }
}

TEST(NegativeCandidates, ThresholdArithmetic) {
  PointCloud obj;
  obj.positions = {{0, 0, 0}, {15, 0, 0}};
  CorrespondenceSet pos;
  pos.pairs = {{0, 0, 0.0}, {1, 1, 0.0}};
  const NegativeCandidates a = build_negative_candidates(obj, obj, pos, 0.1, 100.0, 10, 0);
  EXPECT_EQ(a.safety_radius, 10.0);
  EXPECT_EQ(a.object_side[0], std::vector<std::uint32_t>{1});
  EXPECT_EQ(a.object_side[1], std::vector<std::uint32_t>{0});
  const NegativeCandidates b = build_negative_candidates(obj, obj, pos, 0.2, 100.0, 10, 0);
  EXPECT_TRUE(b.object_side[0].empty());
  EXPECT_TRUE(b.scene_side[1].empty());
}

TEST(NegativeCandidates, MatchesRadiusFilter) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const PointCloud obj = test::random_cloud(500, rng, 40.0);
    const PointCloud scn = test::random_cloud(500, rng, 40.0);
    const CorrespondenceSet pos = mine_positives(obj, scn, RigidPose::identity(), 8.0, 50, seed);
    const NegativeCandidates n = build_negative_candidates(obj, scn, pos, 0.1, 150.0, 200, seed);
    ASSERT_EQ(n.scene_sample.size(), 200u);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      std::vector<std::uint32_t> want_o, want_s;
      const Vec3& a = obj.positions[pos.pairs[k].object_id];
      for (std::size_t i = 0; i < obj.size(); ++i)
        if ((obj.positions[i] - a).norm() > 15.0) want_o.push_back(static_cast<std::uint32_t>(i));
      const Vec3& b = scn.positions[pos.pairs[k].scene_id];
      for (std::size_t j : n.scene_sample)
        if ((scn.positions[j] - b).norm() > 15.0) want_s.push_back(static_cast<std::uint32_t>(j));
      EXPECT_EQ(n.object_side[k], want_o);
      EXPECT_EQ(n.scene_side[k], want_s);
    }
  }
}

TEST(NegativeCandidates, MonotoneInScale) {
  Rng rng(5);
  const PointCloud obj = test::random_cloud(300, rng, 40.0);
  const CorrespondenceSet pos = mine_positives(obj, obj, RigidPose::identity(), 1.0, 30, 0);
  std::vector<std::size_t> prev(pos.size(), obj.size());
  for (double t : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
    const NegativeCandidates n = build_negative_candidates(obj, obj, pos, t, 100.0, 10000, 0);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      EXPECT_LE(n.object_side[k].size(), prev[k]);
      prev[k] = n.object_side[k].size();
    }
  }
}

TEST(NegativeCandidates, SceneScaleOverride) {
  Rng rng(6);
  const PointCloud obj = test::random_cloud(200, rng, 40.0);
  const CorrespondenceSet pos = mine_positives(obj, obj, RigidPose::identity(), 1.0, 10, 0);
  const NegativeCandidates n = build_negative_candidates(obj, obj, pos, 0.1, 100.0, 10000, 0, 0.3);
  EXPECT_EQ(n.scene_safety_radius, 30.0);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    const Vec3& b = obj.positions[pos.pairs[k].scene_id];
    for (std::uint32_t j : n.scene_side[k]) EXPECT_GT((obj.positions[j] - b).norm(), 30.0);
  }
}

TEST(NegativeCandidates, Errors) {
  PointCloud obj;
  obj.positions = {{0, 0, 0}};
  CorrespondenceSet pos;
  pos.pairs = {{0, 0, 0.0}};
  EXPECT_THROW(build_negative_candidates(obj, obj, pos, -0.1, 10.0, 10, 0), InvalidArgument);
  EXPECT_THROW(build_negative_candidates(obj, obj, pos, 0.1, 0.0, 10, 0), InvalidArgument);
  pos.pairs = {{3, 0, 0.0}};
  EXPECT_THROW(build_negative_candidates(obj, obj, pos, 0.1, 10.0, 10, 0), InvalidArgument);
}
