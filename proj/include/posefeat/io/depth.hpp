#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/io/image.hpp"

namespace posefeat {

/// Pinhole intrinsics; depth_scale converts stored depth units to millimetres.
struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  double depth_scale = 1.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("intrinsics need fx > 0 and fy > 0");
    if (!(depth_scale > 0.0)) throw InvalidArgument("intrinsics need depth_scale > 0");
  }
};

using PixelCoord = std::array<int, 2>;  // (u, v)

/// Scene cloud with the source pixel of every point.
struct LiftedCloud {
  PointCloud cloud;
  std::vector<PixelCoord> pixels;
  bool empty() const noexcept { return cloud.empty(); }
};

/// Back-projects every pixel with positive depth: z = d * depth_scale,
/// x = (u - cx) z / fx, y = (v - cy) z / fy. Zero-depth pixels are skipped.
inline LiftedCloud lift_depth_image(const DepthImage& depth, const ColorImage& rgb, const CameraIntrinsics& intr) {
  intr.validate();
  const bool with_color = !rgb.empty();
  if (with_color && (rgb.width != depth.width || rgb.height != depth.height))
    throw InvalidArgument("depth and rgb images differ in size");
  LiftedCloud out;
  for (int v = 0; v < depth.height; ++v)
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (!(d > 0.0)) continue;
      const double z = d * intr.depth_scale;
      out.cloud.positions.emplace_back((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z);
      if (with_color) out.cloud.colors.push_back(rgb.at(u, v));
      out.pixels.push_back({u, v});
    }
  return out;
}

/// Continuous image coordinates of a camera-frame point.
inline std::array<double, 2> project_point(const CameraIntrinsics& intr, const Vec3& p) {
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

/// Median-of-valid-neighbours dilation. Each iteration reads the previous
/// iteration's image: a zero pixel with at least one nonzero 8-neighbour takes
/// the median of those neighbours (mean of the two middle values for an even
/// count). Nonzero pixels are never modified.
inline DepthImage fill_depth_holes(const DepthImage& depth, int max_iterations) {
  if (depth.empty()) throw InvalidArgument("fill_depth_holes: empty depth image");
  DepthImage current = depth;
  std::vector<double> values;
  values.reserve(8);
  for (int it = 0; it < max_iterations; ++it) {
    DepthImage next = current;
    bool changed = false;
    for (int v = 0; v < current.height; ++v)
      for (int u = 0; u < current.width; ++u) {
        if (current.at(u, v) > 0.0) continue;
        values.clear();
        for (int dv = -1; dv <= 1; ++dv)
          for (int du = -1; du <= 1; ++du) {
            if (du == 0 && dv == 0) continue;
            const int nu = u + du, nv = v + dv;
            if (current.contains(nu, nv) && current.at(nu, nv) > 0.0) values.push_back(current.at(nu, nv));
          }
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        const std::size_t n = values.size();
        next.at(u, v) = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
        changed = true;
      }
    current = std::move(next);
    if (!changed) break;
  }
  return current;
}

/// A consumed 2-D detection; bbox corners in pixels, x_max/y_max exclusive.
struct Detection {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  int object_id = 0;
  double confidence = 1.0;
  int image_id = 0;
  int scene_id = -1;  // -1: applies to any scene

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max)) throw InvalidArgument("detection bbox must have x_min < x_max, y_min < y_max");
  }
};

inline constexpr int kDefaultDetectionMarginPx = 5;

inline bool inside_expanded_bbox(const PixelCoord& px, const Detection& det, double margin_px) {
  return px[0] >= det.x_min - margin_px && px[0] < det.x_max + margin_px && px[1] >= det.y_min - margin_px &&
         px[1] < det.y_max + margin_px;
}

/// Keeps points whose source pixel lies in the bbox grown by margin_px on every side.
inline std::vector<std::size_t> crop_indices(std::span<const PixelCoord> pixel_map, const Detection& det,
                                             double margin_px) {
  det.validate();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pixel_map.size(); ++i)
    if (inside_expanded_bbox(pixel_map[i], det, margin_px)) keep.push_back(i);
  return keep;
}

inline PointCloud crop_by_detection(const PointCloud& scene, std::span<const PixelCoord> pixel_map,
                                    const Detection& det, double margin_px = kDefaultDetectionMarginPx) {
  if (pixel_map.size() != scene.size()) throw InvalidArgument("pixel map is not aligned with scene points");
  const std::vector<std::size_t> keep = crop_indices(pixel_map, det, margin_px);
  if (keep.empty()) throw DataError("detection crop removed every scene point");
  return scene.select(keep);
}

}  // namespace posefeat
