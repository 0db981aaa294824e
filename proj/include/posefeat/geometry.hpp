#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Points in millimetres with optional per-point RGB in [0, 1].
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;  // empty, or one entry per position

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }
  bool has_colors() const noexcept { return !colors.empty(); }

  void reserve(std::size_t n, bool with_colors) {
    positions.reserve(n);
    if (with_colors) colors.reserve(n);
  }

  /// Throws InvalidArgument when a type invariant is broken.
  void validate(bool require_non_empty = true) const {
    if (require_non_empty && positions.empty()) throw InvalidArgument("point cloud is empty");
    if (!colors.empty() && colors.size() != positions.size())
      throw InvalidArgument("point cloud has " + std::to_string(colors.size()) + " colors for " +
                            std::to_string(positions.size()) + " positions");
    for (const Vec3& p : positions)
      if (!p.allFinite()) throw InvalidArgument("point cloud has a non-finite coordinate");
  }

  /// Subset by ids, colors carried.
  PointCloud select(std::span<const std::size_t> ids) const {
    PointCloud out;
    out.reserve(ids.size(), has_colors());
    for (std::size_t id : ids) {
      out.positions.push_back(positions[id]);
      if (has_colors()) out.colors.push_back(colors[id]);
    }
    return out;
  }
};

/// Rotation + translation (mm). Maps model coordinates into the target frame: y = R x + t.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (a * b).apply(x) == a.apply(b.apply(x))
  friend RigidPose operator*(const RigidPose& a, const RigidPose& b) {
    RigidPose out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
  }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
  }

  void validate(double tol = 1e-9) const {
    if (!is_valid(tol)) throw InvalidArgument("rotation is not a proper orthonormal matrix");
  }
};

inline Mat3 rotation_about_axis(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Nearest proper rotation in the Frobenius sense.
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Uniformly distributed rotation (Shoemake quaternion method).
inline Mat3 random_rotation(Rng& rng) {
  const double u1 = uniform01(rng), u2 = uniform01(rng), u3 = uniform01(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double two_pi = 2.0 * M_PI;
  Eigen::Quaterniond q(b * std::cos(two_pi * u3), a * std::sin(two_pi * u2), a * std::cos(two_pi * u2),
                       b * std::sin(two_pi * u3));
  return q.normalized().toRotationMatrix();
}

inline PointCloud transform_cloud(const PointCloud& cloud, const RigidPose& pose) {
  PointCloud out;
  out.positions.reserve(cloud.size());
  for (const Vec3& p : cloud.positions) out.positions.push_back(pose.apply(p));
  out.colors = cloud.colors;
  return out;
}

inline std::vector<Vec3> transform_points(std::span<const Vec3> points, const RigidPose& pose) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(pose.apply(p));
  return out;
}

inline constexpr std::size_t kDiameterExactLimit = 5000;
inline constexpr std::uint64_t kDiameterSeed = 0xD1A3E7E5ULL;

/// Maximum pairwise distance. Exact up to kDiameterExactLimit points; larger
/// clouds are reduced to a seeded subsample of that size first.
inline double cloud_diameter(std::span<const Vec3> points, std::uint64_t seed = kDiameterSeed) {
  if (points.size() < 2) throw InvalidArgument("diameter needs at least 2 points");
  std::vector<Vec3> sub;
  std::span<const Vec3> pts = points;
  if (points.size() > kDiameterExactLimit) {
    Rng rng = make_rng(seed);
    for (std::size_t id : sample_indices(points.size(), kDiameterExactLimit, rng)) sub.push_back(points[id]);
    pts = sub;
  }
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).squaredNorm());
  return std::sqrt(best);
}

inline double cloud_diameter(const PointCloud& cloud, std::uint64_t seed = kDiameterSeed) {
  return cloud_diameter(std::span<const Vec3>(cloud.positions), seed);
}

/// Least-squares rigid fit minimising sum |R src_i + t - dst_i|^2 (Kabsch/Umeyama
/// without scale). A reflection is corrected by flipping the weakest singular direction.
inline RigidPose kabsch_fit(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("kabsch_fit: point sets differ in length");
  if (src.size() < 3) throw InvalidArgument("kabsch_fit: need at least 3 point pairs");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0))
    throw DegenerateError("kabsch_fit: cross-covariance has rank < 2 (points coincident or collinear)");
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  RigidPose pose;
  pose.rotation = v * d * u.transpose();
  pose.translation = cd - pose.rotation * cs;
  return pose;
}

}  // namespace posefeat
