#pragma once

// Per-point raw descriptor fed to the embedding model. Layout (D = 14):
//   [0:3)   colour (zeroed when colour is disabled)
//   [3:6)   normal at r1, sign fixed so that n_z >= 0
//   [6:9)   covariance eigenvalues at r1, descending, normalised to sum 1
//   [9:12)  same at r2
//   [12]    (z - mean z) / r2 over the r2 neighbourhood
//   [13]    std(z) / r2 over the r2 neighbourhood

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <span>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/features.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/neighbor_index.hpp"
#include "posefeat/parallel.hpp"

namespace posefeat {

inline constexpr int kDescriptorDim = 14;
inline constexpr std::size_t kMinNeighbors = 3;

struct DescriptorRadii {
  double r1 = 5.0;   // mm
  double r2 = 15.0;  // mm

  /// Scale-matched radii for an object of the given diameter.
  static DescriptorRadii for_diameter(double diameter, double f1 = 0.05, double f2 = 0.15) {
    return {f1 * diameter, f2 * diameter};
  }
};

struct DescriptorOptions {
  bool use_color = true;
  std::size_t jobs = 1;
};

struct DescriptorSet {
  FeatureMatrix values;             // rows x kDescriptorDim
  std::vector<std::uint8_t> valid;  // 0 when a neighbourhood had fewer than 3 points
  DescriptorRadii radii;
};

namespace descriptor_detail {

struct NeighborhoodStats {
  bool ok = false;
  Vec3 eigen_desc = Vec3::Zero();  // descending, sum 1
  Vec3 normal = Vec3::Zero();
  double mean_z = 0.0;
  double std_z = 0.0;
};

inline NeighborhoodStats analyse(std::span<const Vec3> pts) {
  NeighborhoodStats s;
  if (pts.size() < kMinNeighbors) return s;
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  Vec3 ev = es.eigenvalues().cwiseMax(0.0);  // ascending
  const double sum = ev.sum();
  s.mean_z = mean.z();
  s.std_z = std::sqrt(std::max(0.0, cov(2, 2)));
  if (!(sum > 0.0)) return s;
  s.ok = true;
  s.eigen_desc = Vec3(ev(2), ev(1), ev(0)) / sum;
  Vec3 n = es.eigenvectors().col(0);
  if (n.z() < 0.0 || (n.z() == 0.0 && (n.y() < 0.0 || (n.y() == 0.0 && n.x() < 0.0)))) n = -n;
  s.normal = n;
  return s;
}

}  // namespace descriptor_detail

/// Descriptors for `rows` of `cloud` (all points when `rows` is empty).
/// Neighbourhoods always come from the full cloud.
inline DescriptorSet compute_descriptors(const PointCloud& cloud, const NeighborIndex& index, const DescriptorRadii& radii,
                                         const DescriptorOptions& opts = {},
                                         std::span<const std::size_t> rows = {}) {
  if (!(radii.r1 > 0.0) || !(radii.r1 < radii.r2)) throw InvalidArgument("descriptor radii need 0 < r1 < r2");
  if (index.size() != cloud.size()) throw InvalidArgument("neighbour index does not match cloud");
  const std::size_t n_rows = rows.empty() ? cloud.size() : rows.size();
  for (std::size_t i : rows)
    if (i >= cloud.size()) throw InvalidArgument("compute_descriptors: row index out of range");
  DescriptorSet out;
  out.radii = radii;
  out.values = FeatureMatrix::Zero(static_cast<Eigen::Index>(n_rows), kDescriptorDim);
  out.valid.assign(n_rows, 0);

  const double r1_sq = radii.r1 * radii.r1;
  parallel_chunks(n_rows, 256, opts.jobs, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> ids;
    std::vector<Vec3> near, far;
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t i = rows.empty() ? r : rows[r];
      const Vec3& p = cloud.positions[i];
      index.radius_ids(p, radii.r2, ids);
      near.clear();
      far.clear();
      for (std::size_t id : ids) {
        const Vec3& q = cloud.positions[id];
        far.push_back(q);
        if ((q - p).squaredNorm() <= r1_sq) near.push_back(q);
      }
      const auto s1 = descriptor_detail::analyse(near);
      const auto s2 = descriptor_detail::analyse(far);
      auto row = out.values.row(static_cast<Eigen::Index>(r));
      if (opts.use_color && cloud.has_colors())
        for (int k = 0; k < 3; ++k) row(k) = cloud.colors[i](k);
      if (s1.ok)
        for (int k = 0; k < 3; ++k) {
          row(3 + k) = s1.normal(k);
          row(6 + k) = s1.eigen_desc(k);
        }
      if (s2.ok) {
        for (int k = 0; k < 3; ++k) row(9 + k) = s2.eigen_desc(k);
        row(12) = (p.z() - s2.mean_z) / radii.r2;
        row(13) = s2.std_z / radii.r2;
      }
      out.valid[r] = (s1.ok && s2.ok) ? 1 : 0;
    }
  });
  return out;
}

inline DescriptorSet compute_descriptors(const PointCloud& cloud, const DescriptorRadii& radii,
                                         const DescriptorOptions& opts = {}) {
  if (cloud.size() < 10) throw InvalidArgument("compute_descriptors: need at least 10 points");
  const NeighborIndex index(cloud.positions);
  return compute_descriptors(cloud, index, radii, opts);
}

}  // namespace posefeat
