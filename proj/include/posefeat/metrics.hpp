#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/features.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/neighbor_index.hpp"
#include "posefeat/registration.hpp"

namespace posefeat {

/// Mean distance between corresponding model points under the two poses.
inline double add_error(std::span<const Vec3> model, const RigidPose& pred, const RigidPose& gt) {
  if (model.empty()) throw InvalidArgument("add_error: empty model");
  double sum = 0.0;
  for (const Vec3& x : model) sum += (gt.apply(x) - pred.apply(x)).norm();
  return sum / static_cast<double>(model.size());
}

/// Mean over predicted points of the distance to the closest ground-truth point.
inline double adds_error(std::span<const Vec3> model, const RigidPose& pred, const RigidPose& gt) {
  if (model.empty()) throw InvalidArgument("adds_error: empty model");
  const NeighborIndex index(transform_points(model, gt));
  double sum = 0.0;
  for (const Vec3& x : model) sum += index.nearest(pred.apply(x)).distance;
  return sum / static_cast<double>(model.size());
}

inline double add_error(const PointCloud& model, const RigidPose& pred, const RigidPose& gt) {
  return add_error(std::span<const Vec3>(model.positions), pred, gt);
}
inline double adds_error(const PointCloud& model, const RigidPose& pred, const RigidPose& gt) {
  return adds_error(std::span<const Vec3>(model.positions), pred, gt);
}

struct AucGrid {
  double t_min = 1.0;
  double t_max = 100.0;
  double step = 1.0;
};

/// Mean over thresholds t = t_min, t_min + step, ..., t_max of the fraction of
/// errors strictly below t, in percent. Failed instances may be passed as +inf.
inline double add_s_auc(std::span<const double> errors, const AucGrid& grid = {}) {
  if (errors.empty()) throw InvalidArgument("add_s_auc: empty error list");
  if (!(grid.step > 0.0) || !(grid.t_max >= grid.t_min)) throw InvalidArgument("add_s_auc: bad threshold grid");
  for (double e : errors)
    if (std::isnan(e)) throw InvalidArgument("add_s_auc: NaN error");
  const auto n_t = static_cast<std::size_t>(std::floor((grid.t_max - grid.t_min) / grid.step + 1e-9)) + 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < n_t; ++k) {
    const double t = grid.t_min + static_cast<double>(k) * grid.step;
    std::size_t pass = 0;
    for (double e : errors)
      if (e < t) ++pass;
    acc += static_cast<double>(pass) / static_cast<double>(errors.size());
  }
  return 100.0 * acc / static_cast<double>(n_t);
}

inline constexpr double kSuccessFraction = 0.1;

inline bool addsd_success(double error, double diameter, double fraction = kSuccessFraction) {
  if (!(diameter > 0.0)) throw InvalidArgument("addsd_success: diameter must be > 0");
  return error < fraction * diameter;
}

inline double success_rate(std::span<const std::uint8_t> flags) {
  if (flags.empty()) return 0.0;
  std::size_t n = 0;
  for (auto f : flags) n += f ? 1 : 0;
  return 100.0 * static_cast<double>(n) / static_cast<double>(flags.size());
}

struct PoseErrors {
  double rre = 0.0;     // rad
  double rte_cm = 0.0;  // cm
};

inline PoseErrors pose_errors(const RigidPose& pred, const RigidPose& gt) {
  const double c = ((pred.rotation.transpose() * gt.rotation).trace() - 1.0) / 2.0;
  return {std::acos(std::clamp(c, -1.0, 1.0)), (pred.translation - gt.translation).norm() / 10.0};
}

/// One (object, scene) pair for feature-match recall.
struct FmrPair {
  const FeatureMatrix* object_features = nullptr;
  const FeatureMatrix* scene_features = nullptr;
  const std::vector<Vec3>* object_points = nullptr;
  const std::vector<Vec3>* scene_points = nullptr;
  RigidPose gt;
};

struct FmrResult {
  double fmr = 0.0;
  std::vector<double> inlier_ratios;
};

/// Inlier ratio of object->scene feature matches under the ground-truth pose.
inline double match_inlier_ratio(const FmrPair& p, double inlier_distance, std::size_t jobs = 1) {
  const MatchSet m = match_features(*p.object_features, *p.scene_features, {false, jobs});
  std::size_t inl = 0;
  for (const Match& x : m.pairs)
    if ((p.gt.apply((*p.object_points)[x.object_id]) - (*p.scene_points)[x.scene_id]).norm() < inlier_distance) ++inl;
  return static_cast<double>(inl) / static_cast<double>(m.size());
}

/// A pair passes when its inlier ratio (residual < tau1_voxels * Q) exceeds tau2.
inline FmrResult fmr(std::span<const FmrPair> pairs, double tau1_voxels, double tau2_ratio, double voxel_size,
                     std::size_t jobs = 1) {
  if (pairs.empty()) throw InvalidArgument("fmr: no pairs");
  FmrResult res;
  std::size_t pass = 0;
  for (const FmrPair& p : pairs) {
    if (!p.object_features || !p.scene_features || !p.object_points || !p.scene_points)
      throw InvalidArgument("fmr: incomplete pair");
    const double r = match_inlier_ratio(p, tau1_voxels * voxel_size, jobs);
    res.inlier_ratios.push_back(r);
    if (r > tau2_ratio) ++pass;
  }
  res.fmr = static_cast<double>(pass) / static_cast<double>(pairs.size());
  return res;
}

/// Fmr from precomputed inlier ratios.
inline double fmr_from_ratios(std::span<const double> ratios, double tau2_ratio) {
  if (ratios.empty()) throw InvalidArgument("fmr: no pairs");
  std::size_t pass = 0;
  for (double r : ratios)
    if (r > tau2_ratio) ++pass;
  return static_cast<double>(pass) / static_cast<double>(ratios.size());
}

struct DetectorDeltas {
  double s_to_f = 0.0;  // success without detections, failure with them (%)
  double f_to_s = 0.0;
};

inline DetectorDeltas detector_deltas(std::span<const std::uint8_t> with_prior, std::span<const std::uint8_t> without_prior) {
  if (with_prior.size() != without_prior.size())
    throw InvalidArgument("detector_deltas: instance lists differ in length");
  if (with_prior.empty()) return {};
  std::size_t sf = 0, fs = 0;
  for (std::size_t i = 0; i < with_prior.size(); ++i) {
    if (without_prior[i] && !with_prior[i]) ++sf;
    if (!without_prior[i] && with_prior[i]) ++fs;
  }
  const double n = static_cast<double>(with_prior.size());
  return {100.0 * static_cast<double>(sf) / n, 100.0 * static_cast<double>(fs) / n};
}

}  // namespace posefeat
