#pragma once

// BOP benchmark layout:
//   <scene_dir>/scene_camera.json  {"<im_id>": {"cam_K": [9 row-major], "depth_scale": s}}
//   <scene_dir>/scene_gt.json      {"<im_id>": [{"cam_R_m2c": [9 row-major], "cam_t_m2c": [3], "obj_id": n}]}
//   <scene_dir>/depth/<im_id:06d>.png, <scene_dir>/rgb/<im_id:06d>.png

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/io/depth.hpp"
#include "posefeat/io/image.hpp"

namespace posefeat {

struct GtObject {
  int object_id = 0;
  RigidPose pose;  // model -> camera, mm
};

struct BopFrame {
  LiftedCloud scene;
  CameraIntrinsics intrinsics;
  std::vector<GtObject> objects;
};

struct BopReadOptions {
  int hole_fill_iterations = 0;
};

namespace bop_detail {

inline nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::kMissing, "missing file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, "cannot parse " + path.string() + ": " + e.what());
  }
}

inline std::string image_name(int image_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.png", image_id);
  return buf;
}

inline std::vector<double> numbers(const nlohmann::json& j, const char* key, std::size_t n,
                                   const std::filesystem::path& file) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != n)
    throw ParseError(ParseError::Kind::kInvalidValue,
                     file.string() + ": '" + key + "' must be an array of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw ParseError(ParseError::Kind::kInvalidValue, file.string() + ": non-numeric '" + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace bop_detail

inline constexpr double kBopRotationTolerance = 1e-3;

/// Rotation from a BOP row-major 3x3 list. Entries must be orthonormal within
/// 1e-3; the result is snapped to the nearest rotation.
inline Mat3 bop_rotation(const std::vector<double>& rm, const std::string& where) {
  Mat3 r;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r(row, col) = rm[3 * row + col];
  const double ortho_err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho_err <= kBopRotationTolerance) || !(r.determinant() > 0.0))
    throw DataError(where + ": cam_R_m2c is not a rotation (orthonormality error " + std::to_string(ortho_err) + ")");
  const Mat3 snapped = nearest_rotation(r);
  RigidPose check{snapped, Vec3::Zero()};
  if (!check.is_valid(1e-6)) throw DataError(where + ": cam_R_m2c could not be re-orthonormalised");
  return snapped;
}

inline CameraIntrinsics read_bop_camera(const std::filesystem::path& scene_dir, int image_id) {
  const auto file = scene_dir / "scene_camera.json";
  const nlohmann::json cams = bop_detail::load_json(file);
  const std::string key = std::to_string(image_id);
  if (!cams.contains(key)) throw ParseError(ParseError::Kind::kMissing, file.string() + ": no entry for image " + key);
  const auto& cam = cams[key];
  const std::vector<double> k = bop_detail::numbers(cam, "cam_K", 9, file);
  CameraIntrinsics intr;
  intr.fx = k[0];
  intr.cx = k[2];
  intr.fy = k[4];
  intr.cy = k[5];
  intr.depth_scale = cam.contains("depth_scale") ? cam["depth_scale"].get<double>() : 1.0;
  try {
    intr.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(file.string() + ": " + e.what());
  }
  return intr;
}

inline std::vector<GtObject> read_bop_gt(const std::filesystem::path& scene_dir, int image_id) {
  const auto file = scene_dir / "scene_gt.json";
  const nlohmann::json gts = bop_detail::load_json(file);
  const std::string key = std::to_string(image_id);
  if (!gts.contains(key)) throw ParseError(ParseError::Kind::kMissing, file.string() + ": no entry for image " + key);
  std::vector<GtObject> out;
  for (const auto& e : gts[key]) {
    GtObject g;
    if (!e.contains("obj_id")) throw ParseError(ParseError::Kind::kInvalidValue, file.string() + ": entry without obj_id");
    g.object_id = e["obj_id"].get<int>();
    g.pose.rotation = bop_rotation(bop_detail::numbers(e, "cam_R_m2c", 9, file), file.string());
    const std::vector<double> t = bop_detail::numbers(e, "cam_t_m2c", 3, file);
    g.pose.translation = Vec3(t[0], t[1], t[2]);
    out.push_back(g);
  }
  return out;
}

/// Image ids listed in scene_gt.json, ascending.
inline std::vector<int> list_bop_images(const std::filesystem::path& scene_dir) {
  const nlohmann::json gts = bop_detail::load_json(scene_dir / "scene_gt.json");
  std::vector<int> ids;
  for (const auto& [key, _] : gts.items()) ids.push_back(std::stoi(key));
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline BopFrame read_bop_scene(const std::filesystem::path& scene_dir, int image_id, const BopReadOptions& opts = {}) {
  BopFrame frame;
  frame.intrinsics = read_bop_camera(scene_dir, image_id);
  frame.objects = read_bop_gt(scene_dir, image_id);
  const auto depth_path = scene_dir / "depth" / bop_detail::image_name(image_id);
  const auto rgb_path = scene_dir / "rgb" / bop_detail::image_name(image_id);
  if (!std::filesystem::exists(depth_path)) throw ParseError(ParseError::Kind::kMissing, "missing file " + depth_path.string());
  if (!std::filesystem::exists(rgb_path)) throw ParseError(ParseError::Kind::kMissing, "missing file " + rgb_path.string());
  DepthImage depth = read_depth_png(depth_path);
  const ColorImage rgb = read_color_png(rgb_path);
  if (opts.hole_fill_iterations > 0) depth = fill_depth_holes(depth, opts.hole_fill_iterations);
  frame.scene = lift_depth_image(depth, rgb, frame.intrinsics);
  return frame;
}

/// Detections file: JSON list of {image_id, obj_id, bbox: [x, y, w, h], score[, scene_id]}.
inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
  const nlohmann::json j = bop_detail::load_json(path);
  if (!j.is_array()) throw ParseError(ParseError::Kind::kInvalidValue, path.string() + ": detections must be a JSON list");
  std::vector<Detection> out;
  for (const auto& e : j) {
    try {
      Detection d;
      d.image_id = e.at("image_id").get<int>();
      d.object_id = e.at("obj_id").get<int>();
      const auto& b = e.at("bbox");
      if (!b.is_array() || b.size() != 4) throw ParseError(ParseError::Kind::kInvalidValue, "bbox must be [x, y, w, h]");
      d.x_min = b[0].get<double>();
      d.y_min = b[1].get<double>();
      d.x_max = d.x_min + b[2].get<double>();
      d.y_max = d.y_min + b[3].get<double>();
      d.confidence = e.value("score", 1.0);
      d.scene_id = e.value("scene_id", -1);
      d.validate();
      out.push_back(d);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(ParseError::Kind::kInvalidValue, path.string() + ": bad detection entry: " + ex.what());
    } catch (const InvalidArgument& ex) {
      throw ParseError(ParseError::Kind::kInvalidValue, path.string() + ": " + ex.what());
    }
  }
  return out;
}

inline void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  nlohmann::json j = nlohmann::json::array();
  for (const Detection& d : dets) {
    nlohmann::json e{{"image_id", d.image_id},
                     {"obj_id", d.object_id},
                     {"bbox", {d.x_min, d.y_min, d.x_max - d.x_min, d.y_max - d.y_min}},
                     {"score", d.confidence}};
    if (d.scene_id >= 0) e["scene_id"] = d.scene_id;
    j.push_back(e);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace posefeat
