#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/features.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/parallel.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

struct Match {
  std::size_t object_id;
  std::size_t scene_id;
  double distance;  // feature space
};

struct MatchSet {
  std::vector<Match> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

struct MatchOptions {
  bool mutual = false;
  std::size_t jobs = 1;
};

namespace registration_detail {

/// Exact nearest row of `cands` to row `r` of `q`; lowest id wins ties.
inline std::pair<std::size_t, double> nearest_row(const FeatureMatrix& q, Eigen::Index r, const FeatureMatrix& cands) {
  const Eigen::Index dim = q.cols();
  const double* a = q.row(r).data();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_id = 0;
  for (Eigen::Index k = 0; k < cands.rows(); ++k) {
    const double* b = cands.row(k).data();
    double d2 = 0.0;
    for (Eigen::Index c = 0; c < dim && d2 < best; ++c) {
      const double diff = a[c] - b[c];
      d2 += diff * diff;
    }
    if (d2 < best) {
      best = d2;
      best_id = static_cast<std::size_t>(k);
    }
  }
  return {best_id, std::sqrt(best)};
}

}  // namespace registration_detail

/// Nearest scene feature for every object feature. With `mutual`, keeps only
/// pairs where the object point is also the scene point's nearest.
inline MatchSet match_features(const FeatureMatrix& f_obj, const FeatureMatrix& f_scn, const MatchOptions& opts = {}) {
  if (f_obj.rows() == 0 || f_scn.rows() == 0) throw InvalidArgument("match_features: empty feature set");
  if (f_obj.cols() != f_scn.cols()) throw InvalidArgument("match_features: feature widths differ");
  const auto n = static_cast<std::size_t>(f_obj.rows());
  std::vector<Match> all(n);
  parallel_chunks(n, 64, opts.jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [j, d] = registration_detail::nearest_row(f_obj, static_cast<Eigen::Index>(i), f_scn);
      all[i] = {i, j, d};
    }
  });
  MatchSet out;
  if (!opts.mutual) {
    out.pairs = std::move(all);
    return out;
  }
  std::vector<std::size_t> scene_ids;
  for (const Match& m : all) scene_ids.push_back(m.scene_id);
  std::sort(scene_ids.begin(), scene_ids.end());
  scene_ids.erase(std::unique(scene_ids.begin(), scene_ids.end()), scene_ids.end());
  std::vector<std::size_t> back(scene_ids.size());
  parallel_for(scene_ids.size(), opts.jobs, [&](std::size_t k) {
    back[k] = registration_detail::nearest_row(f_scn, static_cast<Eigen::Index>(scene_ids[k]), f_obj).first;
  });
  for (const Match& m : all) {
    const auto k = static_cast<std::size_t>(std::lower_bound(scene_ids.begin(), scene_ids.end(), m.scene_id) -
                                            scene_ids.begin());
    if (back[k] == m.object_id) out.pairs.push_back(m);
  }
  return out;
}

struct RansacConfig {
  std::size_t max_iterations = 10000;
  double inlier_threshold = 6.0;  // mm
  std::size_t min_sample = 3;
  double confidence = 0.999;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const {
    if (max_iterations < 1) throw InvalidArgument("ransac: max_iterations must be >= 1");
    if (!(inlier_threshold > 0.0)) throw InvalidArgument("ransac: inlier_threshold must be > 0");
    if (min_sample != 3) throw InvalidArgument("ransac: min_sample must be 3");
    if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidArgument("ransac: confidence must lie in (0, 1)");
  }
};

struct RansacResult {
  RigidPose pose;
  std::vector<std::size_t> inliers;  // indices into the match set
  std::size_t iterations = 0;        // hypotheses evaluated
  double inlier_ratio = 0.0;
};

namespace registration_detail {

inline std::size_t count_inliers(const std::vector<Vec3>& src, const std::vector<Vec3>& dst, const RigidPose& pose,
                                 double thr_sq, std::vector<std::size_t>* ids = nullptr) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    if ((pose.apply(src[k]) - dst[k]).squaredNorm() < thr_sq) {
      ++n;
      if (ids) ids->push_back(k);
    }
  }
  return n;
}

struct Hypothesis {
  bool valid = false;
  RigidPose pose;
  std::size_t inliers = 0;
};

}  // namespace registration_detail

/// Iteration i draws its 3 distinct matches from derive_seed(seed, {i}), so the
/// result does not depend on cfg.jobs. Hypotheses are reduced in iteration order
/// (ties keep the earlier one) and the early-exit bound is checked after each.
inline RansacResult ransac_register(const PointCloud& object, const PointCloud& scene, const MatchSet& matches,
                                    const RansacConfig& cfg) {
  cfg.validate();
  if (matches.size() < 3) throw InvalidArgument("ransac_register: need at least 3 matches");
  std::vector<Vec3> src, dst;
  src.reserve(matches.size());
  dst.reserve(matches.size());
  for (const Match& m : matches.pairs) {
    if (m.object_id >= object.size() || m.scene_id >= scene.size())
      throw InvalidArgument("ransac_register: match index out of range");
    src.push_back(object.positions[m.object_id]);
    dst.push_back(scene.positions[m.scene_id]);
  }
  const std::size_t n = matches.size();
  const double thr_sq = cfg.inlier_threshold * cfg.inlier_threshold;
  const double log_fail = std::log(1.0 - cfg.confidence);

  registration_detail::Hypothesis best;
  std::size_t evaluated = 0;
  bool done = false;
  constexpr std::size_t kBatch = 256;
  std::vector<registration_detail::Hypothesis> batch(kBatch);
  for (std::size_t start = 0; start < cfg.max_iterations && !done; start += kBatch) {
    const std::size_t count = std::min(kBatch, cfg.max_iterations - start);
    parallel_for(count, cfg.jobs, [&](std::size_t b) {
      Rng rng = make_rng(derive_seed(cfg.seed, {start + b}));
      std::size_t s[3];
      s[0] = uniform_index(rng, n);
      do s[1] = uniform_index(rng, n); while (s[1] == s[0]);
      do s[2] = uniform_index(rng, n); while (s[2] == s[0] || s[2] == s[1]);
      const Vec3 a[3] = {src[s[0]], src[s[1]], src[s[2]]};
      const Vec3 c[3] = {dst[s[0]], dst[s[1]], dst[s[2]]};
      registration_detail::Hypothesis h;
      try {
        h.pose = kabsch_fit(a, c);
        h.valid = true;
        h.inliers = registration_detail::count_inliers(src, dst, h.pose, thr_sq);
      } catch (const DegenerateError&) {
        h.valid = false;
      }
      batch[b] = h;
    });
    for (std::size_t b = 0; b < count; ++b) {
      ++evaluated;
      if (batch[b].valid && batch[b].inliers > best.inliers) best = batch[b];
      const double w = static_cast<double>(best.inliers) / static_cast<double>(n);
      if (w > 0.0) {
        const double p_all = w * w * w;
        const double fail = p_all >= 1.0 ? -std::numeric_limits<double>::infinity()
                                         : static_cast<double>(evaluated) * std::log1p(-p_all);
        if (fail < log_fail) {
          done = true;
          break;
        }
      }
    }
  }
  if (best.inliers < 3) throw RegistrationFailure("ransac_register: best hypothesis has fewer than 3 inliers");

  RansacResult res;
  res.iterations = evaluated;
  std::vector<std::size_t> ids;
  registration_detail::count_inliers(src, dst, best.pose, thr_sq, &ids);
  res.pose = best.pose;
  res.inliers = ids;
  std::vector<Vec3> is, id;
  for (std::size_t k : ids) {
    is.push_back(src[k]);
    id.push_back(dst[k]);
  }
  try {
    const RigidPose refined = kabsch_fit(is, id);
    std::vector<std::size_t> refined_ids;
    registration_detail::count_inliers(src, dst, refined, thr_sq, &refined_ids);
    if (refined_ids.size() >= 3) {
      res.pose = refined;
      res.inliers = std::move(refined_ids);
    }
  } catch (const DegenerateError&) {
  }
  res.inlier_ratio = static_cast<double>(res.inliers.size()) / static_cast<double>(n);
  return res;
}

}  // namespace posefeat
