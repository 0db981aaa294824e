#pragma once

// Three-term hardest contrastive loss
//   total = lambda_p * l_p + lambda_no * l_no + lambda_ns * l_ns
// with
//   l_p  = 1/|P|   sum_{(i,j) in P} (|f_i - f_j| - mu_p)_+^2
//   l_no = 1/|P_i| sum_{(i,j) in P} (mu_n - min_{k in N_i} |f_i - f_k|)_+^2
//   l_ns = 1/|P_j| sum_{(i,j) in P} (mu_n - min_{k in N_j} |f_j - f_k|)_+^2
// where N_i, N_j are the safety-filtered candidate sets. The 1/2 weights of the
// two-sided hardest-negative term are folded into lambda_no and lambda_ns.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/features.hpp"
#include "posefeat/mining.hpp"

namespace posefeat {

/// How |P_i| and |P_j| are counted.
enum class NegativeNormalization {
  kPerAnchor,  // anchors whose candidate set is non-empty
  kPositives,  // |P|
};

struct LossConfig {
  double mu_p = 0.1;
  double mu_n = 10.0;
  double lambda_p = 1.0;
  double lambda_no = 0.6;
  double lambda_ns = 0.4;
  double t_scale = 0.1;
  double tau_p = 4.0;  // mm
  std::size_t max_pairs = 1000;
  std::size_t scene_sample_cap = 10000;
  NegativeNormalization normalization = NegativeNormalization::kPerAnchor;

  void validate() const {
    if (!(mu_p >= 0.0) || !(mu_n >= 0.0)) throw InvalidArgument("loss margins must be >= 0");
    if (!(lambda_p >= 0.0) || !(lambda_no >= 0.0) || !(lambda_ns >= 0.0))
      throw InvalidArgument("loss weights must be >= 0");
    if (!(t_scale >= 0.0)) throw InvalidArgument("t_scale must be >= 0");
    if (!(tau_p > 0.0)) throw InvalidArgument("tau_p must be > 0");
  }
};

inline constexpr std::int64_t kNoNegative = -1;

struct LossBreakdown {
  double l_p = 0.0;
  double l_no = 0.0;
  double l_ns = 0.0;
  double total = 0.0;
  std::vector<std::int64_t> hardest_object;  // per positive; kNoNegative when N_i is empty
  std::vector<std::int64_t> hardest_scene;
  FeatureMatrix grad_object;
  FeatureMatrix grad_scene;
};

namespace loss_detail {

struct Hardest {
  std::int64_t id = kNoNegative;
  double distance = 0.0;
};

/// Lowest-distance candidate; the first (lowest) id wins ties. Squared
/// distances are accumulated in a fixed order and abandoned once they can no
/// longer beat the incumbent, which leaves the result exact.
inline Hardest hardest_negative(const FeatureMatrix& f_anchor_set, Eigen::Index anchor, const FeatureMatrix& f_cand,
                                const std::vector<std::uint32_t>& candidates) {
  Hardest best;
  double best_d2 = std::numeric_limits<double>::infinity();
  const Eigen::Index dim = f_cand.cols();
  const double* a = f_anchor_set.row(anchor).data();
  for (std::uint32_t k : candidates) {
    const double* b = f_cand.row(k).data();
    double d2 = 0.0;
    for (Eigen::Index c = 0; c < dim && d2 < best_d2; ++c) {
      const double diff = a[c] - b[c];
      d2 += diff * diff;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best.id = k;
    }
  }
  if (best.id != kNoNegative) best.distance = (f_anchor_set.row(anchor) - f_cand.row(best.id)).norm();
  return best;
}

}  // namespace loss_detail

/// Loss value, hardest-negative choices and exact (sub)gradients w.r.t. both
/// feature sets, holding the argmin choices fixed. Hinges contribute zero
/// gradient at their kink, as does a zero-length difference vector.
inline LossBreakdown compute_loss(const FeatureMatrix& f_obj, const FeatureMatrix& f_scn,
                                  const CorrespondenceSet& positives, const NegativeCandidates& negatives,
                                  const LossConfig& cfg) {
  cfg.validate();
  if (positives.empty()) throw InvalidArgument("compute_loss: empty positive set");
  if (f_obj.cols() != f_scn.cols()) throw InvalidArgument("compute_loss: feature widths differ");
  if (negatives.object_side.size() != positives.size() || negatives.scene_side.size() != positives.size())
    throw InvalidArgument("compute_loss: negative candidates not aligned with positives");
  require_finite(f_obj, "object features");
  require_finite(f_scn, "scene features");

  const std::size_t n_pos = positives.size();
  for (const Correspondence& c : positives.pairs)
    if (c.object_id >= static_cast<std::size_t>(f_obj.rows()) || c.scene_id >= static_cast<std::size_t>(f_scn.rows()))
      throw InvalidArgument("compute_loss: correspondence index exceeds feature rows");

  LossBreakdown out;
  out.grad_object = FeatureMatrix::Zero(f_obj.rows(), f_obj.cols());
  out.grad_scene = FeatureMatrix::Zero(f_scn.rows(), f_scn.cols());
  out.hardest_object.assign(n_pos, kNoNegative);
  out.hardest_scene.assign(n_pos, kNoNegative);

  std::vector<loss_detail::Hardest> h_obj(n_pos), h_scn(n_pos);
  std::size_t anchors_obj = 0, anchors_scn = 0;
  for (std::size_t k = 0; k < n_pos; ++k) {
    const Correspondence& c = positives.pairs[k];
    for (std::uint32_t cand : negatives.object_side[k])
      if (cand >= f_obj.rows()) throw InvalidArgument("compute_loss: object candidate index out of range");
    for (std::uint32_t cand : negatives.scene_side[k])
      if (cand >= f_scn.rows()) throw InvalidArgument("compute_loss: scene candidate index out of range");
    h_obj[k] = loss_detail::hardest_negative(f_obj, static_cast<Eigen::Index>(c.object_id), f_obj, negatives.object_side[k]);
    h_scn[k] = loss_detail::hardest_negative(f_scn, static_cast<Eigen::Index>(c.scene_id), f_scn, negatives.scene_side[k]);
    out.hardest_object[k] = h_obj[k].id;
    out.hardest_scene[k] = h_scn[k].id;
    if (h_obj[k].id != kNoNegative) ++anchors_obj;
    if (h_scn[k].id != kNoNegative) ++anchors_scn;
  }
  const bool per_anchor = cfg.normalization == NegativeNormalization::kPerAnchor;
  const double norm_p = 1.0 / static_cast<double>(n_pos);
  const double norm_no = per_anchor ? (anchors_obj ? 1.0 / static_cast<double>(anchors_obj) : 0.0) : norm_p;
  const double norm_ns = per_anchor ? (anchors_scn ? 1.0 / static_cast<double>(anchors_scn) : 0.0) : norm_p;

  // Positive term.
  for (const Correspondence& c : positives.pairs) {
    const auto i = static_cast<Eigen::Index>(c.object_id), j = static_cast<Eigen::Index>(c.scene_id);
    const Eigen::RowVectorXd diff = f_obj.row(i) - f_scn.row(j);
    const double d = diff.norm();
    const double hinge = d - cfg.mu_p;
    if (hinge <= 0.0) continue;
    out.l_p += norm_p * hinge * hinge;
    if (d > 0.0) {
      const Eigen::RowVectorXd g = (cfg.lambda_p * 2.0 * norm_p * hinge / d) * diff;
      out.grad_object.row(i) += g;
      out.grad_scene.row(j) -= g;
    }
  }

  // Hardest-negative terms; anchor and negative come from the same cloud.
  const auto negative_term = [&](const FeatureMatrix& f, FeatureMatrix& grad, Eigen::Index anchor,
                                 const loss_detail::Hardest& h, double norm, double lambda) {
    if (h.id == kNoNegative) return 0.0;
    const double hinge = cfg.mu_n - h.distance;
    if (hinge <= 0.0) return 0.0;
    if (h.distance > 0.0) {
      const Eigen::RowVectorXd g = (-lambda * 2.0 * norm * hinge / h.distance) * (f.row(anchor) - f.row(h.id));
      grad.row(anchor) += g;
      grad.row(h.id) -= g;
    }
    return norm * hinge * hinge;
  };
  for (std::size_t k = 0; k < n_pos; ++k) {
    const Correspondence& c = positives.pairs[k];
    out.l_no += negative_term(f_obj, out.grad_object, static_cast<Eigen::Index>(c.object_id), h_obj[k], norm_no,
                              cfg.lambda_no);
    out.l_ns += negative_term(f_scn, out.grad_scene, static_cast<Eigen::Index>(c.scene_id), h_scn[k], norm_ns,
                              cfg.lambda_ns);
  }
  out.total = cfg.lambda_p * out.l_p + cfg.lambda_no * out.l_no + cfg.lambda_ns * out.l_ns;
  return out;
}

}  // namespace posefeat
