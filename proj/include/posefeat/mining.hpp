#pragma once

// Ground-truth correspondence mining and safety-thresholded negative candidates.

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/neighbor_index.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

struct Correspondence {
  std::size_t object_id;
  std::size_t scene_id;
  double distance;  // spatial, mm, after applying the ground-truth pose
};

/// Valid (object, scene) pairs; object ids are unique and ascending.
struct CorrespondenceSet {
  std::vector<Correspondence> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

/// Per positive pair k: negative candidate ids on the object side (for anchor
/// pairs[k].object_id) and on the scene side (for anchor pairs[k].scene_id).
/// Every candidate is strictly farther than its side's radius from its anchor.
struct NegativeCandidates {
  std::vector<std::vector<std::uint32_t>> object_side;
  std::vector<std::vector<std::uint32_t>> scene_side;
  double safety_radius = 0.0;        // object side (tau_NO)
  double scene_safety_radius = 0.0;  // equals safety_radius unless overridden
  std::vector<std::size_t> scene_sample;  // scene ids drawn before filtering
};

inline constexpr std::size_t kUnlimitedPairs = std::numeric_limits<std::size_t>::max();

/// For every object point under `gt`, its single nearest scene point (ties to the
/// lowest id) is a positive when strictly closer than tau_p. Keeps a seeded
/// uniform subsample of exactly max_pairs when more survive.
inline CorrespondenceSet mine_positives(const PointCloud& object, const NeighborIndex& scene_index, const RigidPose& gt,
                                        double tau_p, std::size_t max_pairs, std::uint64_t seed) {
  if (object.empty() || scene_index.size() == 0) throw InvalidArgument("mine_positives: clouds must be non-empty");
  if (!(tau_p > 0.0)) throw InvalidArgument("mine_positives: tau_p must be > 0");
  CorrespondenceSet all;
  for (std::size_t i = 0; i < object.size(); ++i) {
    const Neighbor nn = scene_index.nearest(gt.apply(object.positions[i]));
    if (nn.distance < tau_p) all.pairs.push_back({i, nn.id, nn.distance});
  }
  if (all.empty()) throw MiningError("positive mining found no correspondence below tau_p");
  if (all.size() <= max_pairs) return all;
  Rng rng = make_rng(seed);
  CorrespondenceSet kept;
  kept.pairs.reserve(max_pairs);
  for (std::size_t k : sample_indices(all.size(), max_pairs, rng)) kept.pairs.push_back(all.pairs[k]);
  return kept;
}

inline CorrespondenceSet mine_positives(const PointCloud& object, const PointCloud& scene, const RigidPose& gt,
                                        double tau_p, std::size_t max_pairs, std::uint64_t seed) {
  if (scene.empty()) throw InvalidArgument("mine_positives: clouds must be non-empty");
  const NeighborIndex index(scene.positions);
  return mine_positives(object, index, gt, tau_p, max_pairs, seed);
}

/// tau_NO = t_scale * diameter. Object side: every object point farther than
/// tau_NO from the anchor. Scene side: a seeded sample of at most
/// scene_sample_cap scene points, then the same radius filter around the scene
/// anchor. `scene_t_scale` overrides the scene-side factor when set.
inline NegativeCandidates build_negative_candidates(const PointCloud& object, const PointCloud& scene,
                                                    const CorrespondenceSet& positives, double t_scale, double diameter,
                                                    std::size_t scene_sample_cap, std::uint64_t seed,
                                                    std::optional<double> scene_t_scale = std::nullopt) {
  if (!(t_scale >= 0.0)) throw InvalidArgument("build_negative_candidates: t_scale must be >= 0");
  if (!(diameter > 0.0)) throw InvalidArgument("build_negative_candidates: diameter must be > 0");
  const double scene_scale = scene_t_scale.value_or(t_scale);
  if (!(scene_scale >= 0.0)) throw InvalidArgument("build_negative_candidates: scene t_scale must be >= 0");

  NegativeCandidates out;
  out.safety_radius = t_scale * diameter;
  out.scene_safety_radius = scene_scale * diameter;
  const double r2_obj = out.safety_radius * out.safety_radius;
  const double r2_scn = out.scene_safety_radius * out.scene_safety_radius;

  Rng rng = make_rng(seed);
  out.scene_sample = sample_indices(scene.size(), scene_sample_cap, rng);

  out.object_side.resize(positives.size());
  out.scene_side.resize(positives.size());
  for (std::size_t k = 0; k < positives.size(); ++k) {
    const Correspondence& c = positives.pairs[k];
    if (c.object_id >= object.size() || c.scene_id >= scene.size())
      throw InvalidArgument("build_negative_candidates: correspondence index out of range");
    const Vec3& a = object.positions[c.object_id];
    auto& obj = out.object_side[k];
    for (std::size_t i = 0; i < object.size(); ++i)
      if ((object.positions[i] - a).squaredNorm() > r2_obj) obj.push_back(static_cast<std::uint32_t>(i));
    const Vec3& b = scene.positions[c.scene_id];
    auto& scn = out.scene_side[k];
    for (std::size_t j : out.scene_sample)
      if ((scene.positions[j] - b).squaredNorm() > r2_scn) scn.push_back(static_cast<std::uint32_t>(j));
  }
  return out;
}

}  // namespace posefeat
