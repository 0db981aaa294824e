#pragma once

// Training-time augmentations: per-epoch resampling, colour jitter and
// occlusion by spherical erasure.
//
// Colour jitter, applied in this order with a clamp to [0,1] after each step,
// luma(c) = 0.299 r + 0.587 g + 0.114 b:
//   brightness  c <- b * c
//   contrast    c <- k * c + (1 - k) * mean_luma      (mean over the cloud)
//   saturation  c <- s * c + (1 - s) * luma(c)
//   hue         c <- R(2 pi h) c, R a rotation about the grey axis (1,1,1)/sqrt(3)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/neighbor_index.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

struct AugmentConfig {
  std::size_t object_points = 4000;  // V_O
  std::size_t scene_points = 50000;  // V_S
  bool resample = true;
  bool color_jitter = true;
  bool random_erase = true;
  double brightness = 0.2;  // factor drawn from [1 - x, 1 + x]
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;           // turns, drawn from [-x, x]
  double erase_rho = 0.1;      // fraction of D_O, or mm when erase_rho_mm
  bool erase_rho_mm = false;

  double rho_for(double diameter) const { return erase_rho_mm ? erase_rho : erase_rho * diameter; }

  void validate() const {
    if (!(brightness >= 0.0 && brightness < 1.0) || !(contrast >= 0.0 && contrast < 1.0) ||
        !(saturation >= 0.0 && saturation < 1.0))
      throw InvalidArgument("jitter ranges must lie in [0, 1)");
    if (!(hue >= 0.0 && hue <= 0.5)) throw InvalidArgument("hue jitter must lie in [0, 0.5] turns");
    if (!(erase_rho >= 0.0)) throw InvalidArgument("erase_rho must be >= 0");
  }
};

/// Seeded uniform subsample without replacement; keeps input order.
inline PointCloud resample(const PointCloud& cloud, std::size_t count, std::uint64_t seed,
                           std::vector<std::size_t>* kept = nullptr) {
  if (count > cloud.size())
    throw InvalidArgument("resample: count " + std::to_string(count) + " exceeds cloud size " +
                          std::to_string(cloud.size()));
  Rng rng = make_rng(seed);
  const auto ids = sample_indices(cloud.size(), count, rng);
  if (kept) *kept = ids;
  return cloud.select(ids);
}

struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_turns = 0.0;
};

inline double luma(const Vec3& c) { return 0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z(); }

/// Rotation by angle about the grey axis.
inline Mat3 hue_rotation(double turns) {
  return rotation_about_axis(Vec3(1.0, 1.0, 1.0).normalized(), 2.0 * std::numbers::pi * turns);
}

inline PointCloud apply_jitter(const PointCloud& cloud, const JitterFactors& f) {
  if (!cloud.has_colors()) throw InvalidArgument("color_jitter: cloud has no colours");
  PointCloud out = cloud;
  const auto clamp01 = [](Vec3& c) { c = c.cwiseMax(0.0).cwiseMin(1.0); };
  for (Vec3& c : out.colors) {
    c *= f.brightness;
    clamp01(c);
  }
  double mean_luma = 0.0;
  for (const Vec3& c : out.colors) mean_luma += luma(c);
  if (!out.colors.empty()) mean_luma /= static_cast<double>(out.colors.size());
  const Mat3 rot = hue_rotation(f.hue_turns);
  for (Vec3& c : out.colors) {
    c = f.contrast * c + Vec3::Constant((1.0 - f.contrast) * mean_luma);
    clamp01(c);
    c = f.saturation * c + Vec3::Constant((1.0 - f.saturation) * luma(c));
    clamp01(c);
    c = rot * c;
    clamp01(c);
  }
  return out;
}

inline JitterFactors draw_jitter(const AugmentConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  JitterFactors f;
  f.brightness = uniform(rng, 1.0 - cfg.brightness, 1.0 + cfg.brightness);
  f.contrast = uniform(rng, 1.0 - cfg.contrast, 1.0 + cfg.contrast);
  f.saturation = uniform(rng, 1.0 - cfg.saturation, 1.0 + cfg.saturation);
  f.hue_turns = uniform(rng, -cfg.hue, cfg.hue);
  return f;
}

inline PointCloud color_jitter(const PointCloud& cloud, const AugmentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return apply_jitter(cloud, draw_jitter(cfg, seed));
}

struct EraseResult {
  PointCloud cloud;
  std::vector<std::size_t> kept;  // ids into the input scene
  std::size_t center = 0;
  bool flagged = false;  // no centre available, or nothing left
};

/// Picks a seeded centre among the distinct scene nearest neighbours of the
/// transformed object points and drops every scene point within rho of it.
inline EraseResult random_erase(const PointCloud& scene, const std::vector<Vec3>& object_transformed, double rho,
                                std::uint64_t seed) {
  if (!(rho >= 0.0)) throw InvalidArgument("random_erase: rho must be >= 0");
  EraseResult res;
  if (scene.empty() || object_transformed.empty()) {
    res.cloud = scene;
    res.kept.resize(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) res.kept[i] = i;
    res.flagged = true;
    return res;
  }
  const NeighborIndex index(scene.positions);
  std::vector<std::size_t> region;
  region.reserve(object_transformed.size());
  for (const Vec3& p : object_transformed) region.push_back(index.nearest(p).id);
  std::sort(region.begin(), region.end());
  region.erase(std::unique(region.begin(), region.end()), region.end());
  Rng rng = make_rng(seed);
  res.center = region[uniform_index(rng, region.size())];
  const Vec3 c = scene.positions[res.center];
  const double rho_sq = rho * rho;
  for (std::size_t i = 0; i < scene.size(); ++i)
    if ((scene.positions[i] - c).squaredNorm() > rho_sq) res.kept.push_back(i);
  res.cloud = scene.select(res.kept);
  res.flagged = res.kept.empty();
  return res;
}

}  // namespace posefeat
