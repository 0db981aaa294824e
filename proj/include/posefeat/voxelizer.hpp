#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

using VoxelKey = std::array<std::int64_t, 3>;

enum class QuantizeMode { kRandom, kBarycenter };

/// One representative per occupied voxel, sorted by key.
struct QuantizedCloud {
  PointCloud representatives;
  std::vector<VoxelKey> voxel_keys;
  double voxel_size = 0.0;
  Vec3 origin = Vec3::Zero();

  std::size_t size() const noexcept { return representatives.size(); }
};

inline VoxelKey voxel_key(const Vec3& p, const Vec3& origin, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor((p.x() - origin.x()) / voxel_size)),
          static_cast<std::int64_t>(std::floor((p.y() - origin.y()) / voxel_size)),
          static_cast<std::int64_t>(std::floor((p.z() - origin.z()) / voxel_size))};
}

/// Grid anchored at the componentwise minimum of the cloud. Barycenter mode
/// averages positions and colours of a voxel's members (summed in a canonical
/// order, so the result does not depend on input order); random mode keeps one
/// seeded member per voxel.
inline QuantizedCloud quantize(const PointCloud& cloud, double voxel_size, QuantizeMode mode = QuantizeMode::kBarycenter,
                               std::uint64_t seed = 0) {
  if (!(voxel_size > 0.0)) throw InvalidArgument("quantize: voxel_size must be > 0");
  QuantizedCloud out;
  out.voxel_size = voxel_size;
  if (cloud.empty()) return out;
  cloud.validate();

  Vec3 origin = cloud.positions.front();
  for (const Vec3& p : cloud.positions) origin = origin.cwiseMin(p);
  out.origin = origin;

  const std::size_t n = cloud.size();
  std::vector<VoxelKey> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = voxel_key(cloud.positions[i], origin, voxel_size);

  // Canonical member order inside a voxel: by position, then colour, then index.
  const auto canonical_less = [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    const Vec3& pa = cloud.positions[a];
    const Vec3& pb = cloud.positions[b];
    for (int k = 0; k < 3; ++k)
      if (pa(k) != pb(k)) return pa(k) < pb(k);
    if (cloud.has_colors())
      for (int k = 0; k < 3; ++k)
        if (cloud.colors[a](k) != cloud.colors[b](k)) return cloud.colors[a](k) < cloud.colors[b](k);
    return a < b;
  };
  const auto index_less = [&](std::size_t a, std::size_t b) { return keys[a] != keys[b] ? keys[a] < keys[b] : a < b; };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == QuantizeMode::kBarycenter) {
    std::sort(order.begin(), order.end(), canonical_less);
  } else {
    std::sort(order.begin(), order.end(), index_less);
  }

  const bool colors = cloud.has_colors();
  std::size_t voxel = 0;
  for (std::size_t begin = 0; begin < n; ++voxel) {
    std::size_t end = begin + 1;
    while (end < n && keys[order[end]] == keys[order[begin]]) ++end;
    out.voxel_keys.push_back(keys[order[begin]]);
    if (mode == QuantizeMode::kBarycenter) {
      Vec3 p = Vec3::Zero(), c = Vec3::Zero();
      for (std::size_t k = begin; k < end; ++k) {
        p += cloud.positions[order[k]];
        if (colors) c += cloud.colors[order[k]];
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      out.representatives.positions.push_back(p * inv);
      if (colors) out.representatives.colors.push_back(c * inv);
    } else {
      Rng rng = make_rng(derive_seed(seed, {voxel}));
      const std::size_t pick = order[begin + uniform_index(rng, end - begin)];
      out.representatives.positions.push_back(cloud.positions[pick]);
      if (colors) out.representatives.colors.push_back(cloud.colors[pick]);
    }
    begin = end;
  }
  return out;
}

}  // namespace posefeat
