#pragma once

// Procedural desk-scale object/scene pairs with exact ground truth.
//
// Scenes live in a support-aligned world frame: the table is the plane z = 0,
// objects rest on it with their model base at z = 0. A virtual camera looks
// straight down from kSyntheticCameraHeight mm; it only assigns pixels so that
// detection crops work on synthetic data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/io/depth.hpp"
#include "posefeat/io/mesh.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

enum class ShapeKind { kBox, kCylinder, kLBracket, kComposite };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kBox: return "box";
    case ShapeKind::kCylinder: return "cylinder";
    case ShapeKind::kLBracket: return "l_bracket";
    case ShapeKind::kComposite: return "composite";
  }
  return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "box") return ShapeKind::kBox;
  if (s == "cylinder") return ShapeKind::kCylinder;
  if (s == "l_bracket") return ShapeKind::kLBracket;
  if (s == "composite") return ShapeKind::kComposite;
  throw InvalidArgument("unknown shape kind '" + s + "' (expected box, cylinder, l_bracket, composite)");
}

/// Procedural object. Field use per kind:
///   box        extent (x, y, z)
///   cylinder   radius, height
///   l_bracket  extent (x length, y depth, z height), thickness of both arms
///   composite  extent of the base box, radius/height of the column on top
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kBox;
  std::string name = "box";
  int object_id = 1;
  Vec3 extent{70.0, 50.0, 40.0};
  double radius = 25.0;
  double height = 70.0;
  double thickness = 20.0;
  double hue_offset = 0.0;
  bool symmetric = false;               // ADD-S dispatch for ADD(S)
  std::size_t surface_points = 2000;    // object points placed in the scene
};

struct PoseSpec {
  double placement_half_extent = 60.0;  // object xy centre drawn uniformly in [-h, h]^2
  double max_tilt = 0.0;                // rad, about a random horizontal axis
};

struct ClutterSpec {
  double table_half_size = 150.0;
  std::size_t table_points = 3000;
  std::size_t num_distractors = 3;
  std::size_t distractor_points = 800;
  double min_gap = 8.0;  // mm between footprints
};

struct ScenePair {
  PointCloud object_cloud;               // model frame
  PointCloud scene_cloud;                // world frame
  RigidPose gt_pose;                     // model -> world
  double object_diameter = 0.0;
  std::vector<PixelCoord> scene_pixels;  // virtual camera pixel per scene point
  std::vector<std::uint8_t> object_mask; // 1 where the scene point came from the object
  std::size_t visible_object_points = 0;
};

inline constexpr double kSyntheticCameraHeight = 700.0;

inline CameraIntrinsics synthetic_camera() {
  CameraIntrinsics c;
  c.fx = c.fy = 575.0;
  c.cx = 320.0;
  c.cy = 240.0;
  c.depth_scale = 1.0;
  return c;
}

/// World (z up) -> camera (z forward, y down) for the overhead virtual camera.
inline RigidPose synthetic_world_to_camera() {
  RigidPose p;
  p.rotation = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
  p.translation = Vec3(0.0, 0.0, kSyntheticCameraHeight);
  return p;
}

inline PixelCoord synthetic_pixel(const Vec3& world) {
  const Vec3 c = synthetic_world_to_camera().apply(world);
  const auto uv = project_point(synthetic_camera(), c);
  return {static_cast<int>(std::floor(uv[0])), static_cast<int>(std::floor(uv[1]))};
}

/// Textured mesh in the model frame: centred in x/y, base at z = 0.
inline TexturedMesh build_shape_mesh(const ShapeSpec& s) {
  TexturedMesh m;
  const double h0 = s.hue_offset;
  switch (s.kind) {
    case ShapeKind::kBox: {
      const Vec3 half(s.extent.x() / 2, s.extent.y() / 2, 0.0);
      append_box(m, -half, half + Vec3(0, 0, s.extent.z()), h0);
      break;
    }
    case ShapeKind::kCylinder:
      append_cylinder(m, s.radius, 0.0, s.height, h0);
      break;
    case ShapeKind::kLBracket: {
      // L profile in the x-z plane extruded along y.
      const double len = s.extent.x(), dep = s.extent.y(), hgt = s.extent.z(), t = s.thickness;
      const Vec3 o(-len / 2, -dep / 2, 0.0);
      const Vec3 ey(0, dep, 0);
      const double step = 1.0 / 8.0;
      const auto tex = [&](int k) { return gradient_band(h0 + k * step); };
      append_grid(m, o, Vec3(0, 0, 0) + ey, Vec3(len, 0, 0), 2, 6, tex(0));                       // bottom
      append_grid(m, o + Vec3(len, 0, 0), ey, Vec3(0, 0, t), 2, 2, tex(1));                        // end of foot
      append_grid(m, o + Vec3(len, 0, t), Vec3(t - len, 0, 0), ey, 6, 2, tex(2));                  // top of foot
      append_grid(m, o + Vec3(t, 0, t), ey, Vec3(0, 0, hgt - t), 2, 6, tex(3));                    // inner wall
      append_grid(m, o + Vec3(t, 0, hgt), Vec3(-t, 0, 0), ey, 2, 2, tex(4));                       // top of wall
      append_grid(m, o + Vec3(0, 0, hgt), Vec3(0, 0, -hgt), ey, 6, 2, tex(5));                     // outer wall
      append_grid(m, o, Vec3(len, 0, 0), Vec3(0, 0, t), 6, 2, tex(6));                             // front cap, foot
      append_grid(m, o + Vec3(0, 0, t), Vec3(t, 0, 0), Vec3(0, 0, hgt - t), 2, 6, tex(6));         // front cap, wall
      append_grid(m, o + ey, Vec3(0, 0, t), Vec3(len, 0, 0), 2, 6, tex(7));                        // back cap, foot
      append_grid(m, o + ey + Vec3(0, 0, t), Vec3(0, 0, hgt - t), Vec3(t, 0, 0), 6, 2, tex(7));    // back cap, wall
      break;
    }
    case ShapeKind::kComposite: {
      const Vec3 half(s.extent.x() / 2, s.extent.y() / 2, 0.0);
      append_box(m, -half, half + Vec3(0, 0, s.extent.z()), h0);
      const Vec3 column_centre(s.extent.x() / 5.0, 0.0, 0.0);
      append_cylinder(m, s.radius, s.extent.z(), s.height, h0 + 0.5, 48, false, column_centre);
      break;
    }
  }
  return m;
}

/// The four procedural classes used by the desk-scale suite.
inline std::vector<ShapeSpec> standard_object_classes() {
  std::vector<ShapeSpec> out;
  ShapeSpec box;
  box.kind = ShapeKind::kBox;
  box.name = "box";
  box.object_id = 1;
  box.extent = Vec3(70, 50, 40);
  box.hue_offset = 0.0;
  out.push_back(box);

  ShapeSpec cyl;
  cyl.kind = ShapeKind::kCylinder;
  cyl.name = "cylinder";
  cyl.object_id = 2;
  cyl.radius = 25;
  cyl.height = 70;
  cyl.hue_offset = 0.3;
  out.push_back(cyl);

  ShapeSpec bracket;
  bracket.kind = ShapeKind::kLBracket;
  bracket.name = "l_bracket";
  bracket.object_id = 3;
  bracket.extent = Vec3(70, 50, 55);
  bracket.thickness = 18;
  bracket.hue_offset = 0.55;
  out.push_back(bracket);

  ShapeSpec comp;
  comp.kind = ShapeKind::kComposite;
  comp.name = "composite";
  comp.object_id = 4;
  comp.extent = Vec3(60, 50, 24);
  comp.radius = 14;
  comp.height = 36;
  comp.hue_offset = 0.8;
  out.push_back(comp);
  return out;
}

namespace synthetic_detail {

/// Radius of the object's footprint about its model z axis.
inline double footprint_radius(const PointCloud& model) {
  double r = 0.0;
  for (const Vec3& p : model.positions) r = std::max(r, p.head<2>().norm());
  return r;
}

struct Distractor {
  TexturedMesh mesh;
  Vec3 centre;
  double radius;
};

inline Distractor make_distractor(Rng& rng, const Vec3& centre, double radius) {
  Distractor d;
  d.centre = centre;
  d.radius = radius;
  const double hue = uniform01(rng);
  const double height = uniform(rng, 15.0, 60.0);
  if (uniform01(rng) < 0.5) {
    const double side = radius * std::sqrt(2.0);
    const Vec3 half(side / 2, side / 2, 0);
    append_box(d.mesh, centre - half, centre + half + Vec3(0, 0, height), hue, 3, false);
  } else {
    append_cylinder(d.mesh, radius, 0.0, height, hue, 32, false, Vec3(centre.x(), centre.y(), 0.0));
  }
  return d;
}

}  // namespace synthetic_detail

/// One object in a cluttered scene. The object part of the scene is the
/// `object_cloud` sample under `gt_pose`, minus the `occlusion_fraction` of its
/// points nearest a random centre (a contiguous spherical region), plus
/// isotropic Gaussian noise on every scene coordinate.
inline ScenePair generate_synthetic_pair(const ShapeSpec& shape, const PoseSpec& pose_spec, const ClutterSpec& clutter,
                                         double occlusion_fraction, double noise_sigma_mm, std::uint64_t seed) {
  if (!(occlusion_fraction >= 0.0) || occlusion_fraction >= 1.0)
    throw InvalidArgument("occlusion_fraction must lie in [0, 1)");
  if (!(noise_sigma_mm >= 0.0)) throw InvalidArgument("noise_sigma_mm must be >= 0");
  using namespace synthetic_detail;

  ScenePair pair;
  const TexturedMesh mesh = build_shape_mesh(shape);
  pair.object_cloud = sample_mesh_surface(mesh, shape.surface_points, derive_seed(seed, {1}));
  pair.object_diameter = cloud_diameter(pair.object_cloud);

  Rng rng = make_rng(derive_seed(seed, {2}));
  const double yaw = uniform(rng, 0.0, 2.0 * M_PI);
  Mat3 rot = rotation_about_axis(Vec3::UnitZ(), yaw);
  if (pose_spec.max_tilt > 0.0) {
    const double axis_angle = uniform(rng, 0.0, 2.0 * M_PI);
    const Vec3 axis(std::cos(axis_angle), std::sin(axis_angle), 0.0);
    rot = rotation_about_axis(axis, uniform(rng, 0.0, pose_spec.max_tilt)) * rot;
  }
  const double h = pose_spec.placement_half_extent;
  pair.gt_pose.rotation = rot;
  pair.gt_pose.translation = Vec3(uniform(rng, -h, h), uniform(rng, -h, h), 0.0);

  const PointCloud placed = transform_cloud(pair.object_cloud, pair.gt_pose);
  std::vector<std::size_t> visible(placed.size());
  std::iota(visible.begin(), visible.end(), std::size_t{0});
  const auto n_remove = static_cast<std::size_t>(std::llround(occlusion_fraction * static_cast<double>(placed.size())));
  if (n_remove > 0) {
    const Vec3 centre = placed.positions[uniform_index(rng, placed.size())];
    std::vector<std::pair<double, std::size_t>> by_dist;
    by_dist.reserve(placed.size());
    for (std::size_t i = 0; i < placed.size(); ++i) by_dist.emplace_back((placed.positions[i] - centre).squaredNorm(), i);
    std::sort(by_dist.begin(), by_dist.end());
    visible.clear();
    for (std::size_t k = n_remove; k < by_dist.size(); ++k) visible.push_back(by_dist[k].second);
    std::sort(visible.begin(), visible.end());
  }

  PointCloud& scene = pair.scene_cloud;
  for (std::size_t id : visible) {
    scene.positions.push_back(placed.positions[id]);
    scene.colors.push_back(placed.colors[id]);
    pair.object_mask.push_back(1);
  }
  pair.visible_object_points = visible.size();

  // Table, minus the patch hidden under the object's footprint.
  const RigidPose to_model = pair.gt_pose.inverse();
  Vec3 model_lo = pair.object_cloud.positions.front(), model_hi = model_lo;
  for (const Vec3& p : pair.object_cloud.positions) {
    model_lo = model_lo.cwiseMin(p);
    model_hi = model_hi.cwiseMax(p);
  }
  Rng table_rng = make_rng(derive_seed(seed, {3}));
  const double ts = clutter.table_half_size;
  for (std::size_t i = 0; i < clutter.table_points; ++i) {
    const Vec3 p(uniform(table_rng, -ts, ts), uniform(table_rng, -ts, ts), 0.0);
    const Vec3 m = to_model.apply(p);
    if (m.x() > model_lo.x() - 2.0 && m.x() < model_hi.x() + 2.0 && m.y() > model_lo.y() - 2.0 &&
        m.y() < model_hi.y() + 2.0)
      continue;
    const double shade = 0.55 + 0.06 * (uniform01(table_rng) - 0.5);
    scene.positions.push_back(p);
    scene.colors.push_back(Vec3(shade, shade * 0.92, shade * 0.8));
    pair.object_mask.push_back(0);
  }

  // Distractors around the object, kept clear of it and of each other.
  Rng clutter_rng = make_rng(derive_seed(seed, {4}));
  const double object_r = footprint_radius(pair.object_cloud);
  const Vec3 object_xy(pair.gt_pose.translation.x(), pair.gt_pose.translation.y(), 0.0);
  std::vector<std::pair<Vec3, double>> placed_footprints{{object_xy, object_r}};
  for (std::size_t d = 0; d < clutter.num_distractors; ++d) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double r = uniform(clutter_rng, 12.0, 28.0);
      const Vec3 c(uniform(clutter_rng, -ts + r, ts - r), uniform(clutter_rng, -ts + r, ts - r), 0.0);
      bool clear = true;
      for (const auto& [oc, orad] : placed_footprints)
        if ((c - oc).norm() < r + orad + clutter.min_gap) clear = false;
      if (!clear) continue;
      placed_footprints.emplace_back(c, r);
      const Distractor dis = make_distractor(clutter_rng, c, r);
      const PointCloud pts = sample_mesh_surface(dis.mesh, clutter.distractor_points, derive_seed(seed, {5, d}));
      for (std::size_t i = 0; i < pts.size(); ++i) {
        scene.positions.push_back(pts.positions[i]);
        scene.colors.push_back(pts.colors[i]);
        pair.object_mask.push_back(0);
      }
      break;
    }
  }

  if (noise_sigma_mm > 0.0) {
    Rng noise_rng = make_rng(derive_seed(seed, {6}));
    for (Vec3& p : scene.positions)
      for (int k = 0; k < 3; ++k) p(k) += normal(noise_rng, noise_sigma_mm);
  }
  pair.scene_pixels.reserve(scene.size());
  for (const Vec3& p : scene.positions) pair.scene_pixels.push_back(synthetic_pixel(p));
  return pair;
}

/// Tight bbox of the visible object pixels, as a detection in the virtual camera.
inline Detection synthetic_detection(const ScenePair& pair, int object_id, int image_id) {
  Detection d;
  d.object_id = object_id;
  d.image_id = image_id;
  d.x_min = d.y_min = 1e9;
  d.x_max = d.y_max = -1e9;
  for (std::size_t i = 0; i < pair.scene_pixels.size(); ++i) {
    if (!pair.object_mask[i]) continue;
    d.x_min = std::min<double>(d.x_min, pair.scene_pixels[i][0]);
    d.y_min = std::min<double>(d.y_min, pair.scene_pixels[i][1]);
    d.x_max = std::max<double>(d.x_max, pair.scene_pixels[i][0] + 1);
    d.y_max = std::max<double>(d.y_max, pair.scene_pixels[i][1] + 1);
  }
  return d;
}

}  // namespace posefeat
