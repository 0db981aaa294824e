#pragma once

// Datasets: object models plus (scene, ground-truth pose) instances.
//
// Sources:
//   synthetic, in memory      procedural classes generated from data_seed
//   synthetic, dataset_dir    a directory written by `posefeat synth`
//   bop                       a BOP-layout directory (models/, <split>/<scene>/...)
//
// Synthetic directory layout:
//   dataset.json              {"format": "posefeat-synthetic", "version": 1, "classes": [...], "instances": [...]}
//   models/obj_%06d.ply       textured meshes
//   scenes/%06d_%06d.ply      scene clouds (double precision, u/v pixels), named <scene_id>_<image_id>
//   detections.json           tight boxes of the visible object, one per instance

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefeat/config.hpp"
#include "posefeat/descriptors.hpp"
#include "posefeat/errors.hpp"
#include "posefeat/geometry.hpp"
#include "posefeat/io/bop.hpp"
#include "posefeat/io/depth.hpp"
#include "posefeat/io/mesh.hpp"
#include "posefeat/io/ply.hpp"
#include "posefeat/io/synthetic.hpp"
#include "posefeat/random.hpp"

namespace posefeat {

struct ObjectModel {
  int object_id = 0;
  std::string name;
  bool symmetric = false;
  TexturedMesh mesh;
  PointCloud cloud;  // canonical dense sample, model frame
  double diameter = 0.0;
};

struct Instance {
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  std::shared_ptr<const LiftedCloud> scene;  // shared between instances of one image
  RigidPose gt;                              // model -> scene
};

struct Dataset {
  std::map<int, ObjectModel> objects;
  std::vector<Instance> train;
  std::vector<Instance> heldout;
  std::vector<Detection> detections;  // synthetic only: tight boxes for the held-out split

  const ObjectModel& object(int id) const {
    const auto it = objects.find(id);
    if (it == objects.end()) throw DataError("no object model for object id " + std::to_string(id));
    return it->second;
  }
};

inline constexpr int kTrainSceneId = 0;
inline constexpr int kHeldoutSceneId = 1;

inline DescriptorRadii radii_for(const RunConfig& cfg, const ObjectModel& m) {
  return DescriptorRadii::for_diameter(m.diameter, cfg.radius_r1, cfg.radius_r2);
}

namespace dataset_detail {

inline ObjectModel make_object(int id, std::string name, bool symmetric, TexturedMesh mesh, const RunConfig& cfg) {
  ObjectModel m;
  m.object_id = id;
  m.name = std::move(name);
  m.symmetric = symmetric ||
                std::find(cfg.symmetric_object_ids.begin(), cfg.symmetric_object_ids.end(), id) !=
                    cfg.symmetric_object_ids.end();
  m.mesh = std::move(mesh);
  m.cloud = sample_mesh_surface(m.mesh, cfg.model_points, derive_seed(cfg.data_seed, {0x4d4f44, static_cast<std::uint64_t>(id)}));
  m.diameter = cloud_diameter(m.cloud);
  return m;
}

inline bool selected(const RunConfig& cfg, int id) {
  return cfg.object_ids.empty() || std::find(cfg.object_ids.begin(), cfg.object_ids.end(), id) != cfg.object_ids.end();
}

inline std::vector<ShapeSpec> selected_classes(const RunConfig& cfg) {
  std::vector<ShapeSpec> out;
  for (const ShapeSpec& s : standard_object_classes())
    if (selected(cfg, s.object_id)) out.push_back(s);
  if (out.empty()) throw InvalidArgument("object_ids selects none of the synthetic classes (1-4)");
  return out;
}

inline std::string scene_file(int scene_id, int image_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d_%06d.ply", scene_id, image_id);
  return buf;
}

inline std::string model_file(int object_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "obj_%06d.ply", object_id);
  return buf;
}

inline nlohmann::json pose_json(const RigidPose& p) {
  nlohmann::json r = nlohmann::json::array(), t = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(p.rotation(i, j));
  for (int i = 0; i < 3; ++i) t.push_back(p.translation(i));
  return {{"R", r}, {"t", t}};
}

inline RigidPose pose_from_json(const nlohmann::json& j) {
  const auto r = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw ParseError(ParseError::Kind::kInvalidValue, "pose needs R[9] and t[3]");
  RigidPose p;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p.rotation(i, j) = r[3 * i + j];
  for (int i = 0; i < 3; ++i) p.translation(i) = t[i];
  p.validate();
  return p;
}

}  // namespace dataset_detail

/// Per-split synthetic instances; instance i of a split uses class i mod #classes.
inline Dataset generate_synthetic_dataset(const RunConfig& cfg) {
  using namespace dataset_detail;
  Dataset ds;
  const auto classes = selected_classes(cfg);
  for (const ShapeSpec& s : classes)
    ds.objects.emplace(s.object_id, make_object(s.object_id, s.name, s.symmetric, build_shape_mesh(s), cfg));
  PoseSpec pose;
  pose.max_tilt = cfg.max_tilt;
  ClutterSpec clutter;
  clutter.num_distractors = cfg.num_distractors;
  const auto make_split = [&](int scene_id, std::size_t count, std::vector<Instance>& out) {
    for (std::size_t i = 0; i < count; ++i) {
      const ShapeSpec& shape = classes[i % classes.size()];
      Rng rng = make_rng(derive_seed(cfg.data_seed, {static_cast<std::uint64_t>(scene_id), i, 0}));
      const double occlusion = uniform(rng, 0.0, cfg.occlusion_max);
      ScenePair pair = generate_synthetic_pair(shape, pose, clutter, occlusion, cfg.noise_sigma,
                                               derive_seed(cfg.data_seed, {static_cast<std::uint64_t>(scene_id), i, 1}));
      Instance inst;
      inst.scene_id = scene_id;
      inst.image_id = static_cast<int>(i);
      inst.object_id = shape.object_id;
      inst.gt = pair.gt_pose;
      auto lifted = std::make_shared<LiftedCloud>();
      lifted->cloud = std::move(pair.scene_cloud);
      lifted->pixels = pair.scene_pixels;
      if (scene_id == kHeldoutSceneId) {
        ScenePair view;
        view.scene_pixels = std::move(pair.scene_pixels);
        view.object_mask = std::move(pair.object_mask);
        Detection d = synthetic_detection(view, shape.object_id, inst.image_id);
        d.scene_id = scene_id;
        ds.detections.push_back(d);
      }
      inst.scene = std::move(lifted);
      out.push_back(std::move(inst));
    }
  };
  make_split(kTrainSceneId, cfg.train_pairs, ds.train);
  make_split(kHeldoutSceneId, cfg.heldout_pairs, ds.heldout);
  return ds;
}

inline void write_synthetic_dataset(const std::filesystem::path& dir, const Dataset& ds, const RunConfig& cfg) {
  using namespace dataset_detail;
  namespace fs = std::filesystem;
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "scenes");
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& [id, m] : ds.objects) {
    write_ply_model(dir / "models" / model_file(id), m.mesh);
    classes.push_back({{"object_id", id}, {"name", m.name}, {"symmetric", m.symmetric},
                       {"model", "models/" + model_file(id)}});
  }
  nlohmann::json instances = nlohmann::json::array();
  const auto add = [&](const Instance& inst, const char* split) {
    const std::string file = scene_file(inst.scene_id, inst.image_id);
    write_ply_cloud(dir / "scenes" / file, inst.scene->cloud, &inst.scene->pixels);
    instances.push_back({{"split", split}, {"scene_id", inst.scene_id}, {"image_id", inst.image_id},
                         {"object_id", inst.object_id}, {"scene", "scenes/" + file}, {"gt", pose_json(inst.gt)}});
  };
  for (const auto& inst : ds.train) add(inst, "train");
  for (const auto& inst : ds.heldout) add(inst, "heldout");
  const nlohmann::json doc{{"format", "posefeat-synthetic"}, {"version", 1},   {"data_seed", cfg.data_seed},
                           {"classes", classes},              {"instances", instances}};
  std::ofstream out(dir / "dataset.json");
  if (!out) throw DataError("cannot write " + (dir / "dataset.json").string());
  out << doc.dump(1) << '\n';
  write_detections(dir / "detections.json", ds.detections);
}

inline Dataset read_synthetic_dataset(const std::filesystem::path& dir, const RunConfig& cfg) {
  using namespace dataset_detail;
  const nlohmann::json doc = bop_detail::load_json(dir / "dataset.json");
  Dataset ds;
  try {
    if (doc.at("format").get<std::string>() != "posefeat-synthetic")
      throw ParseError(ParseError::Kind::kUnsupported, (dir / "dataset.json").string() + ": not a synthetic dataset");
    for (const auto& c : doc.at("classes")) {
      const int id = c.at("object_id").get<int>();
      if (!selected(cfg, id)) continue;
      ds.objects.emplace(id, make_object(id, c.at("name").get<std::string>(), c.at("symmetric").get<bool>(),
                                         read_ply_model(dir / c.at("model").get<std::string>()), cfg));
    }
    for (const auto& e : doc.at("instances")) {
      Instance inst;
      inst.object_id = e.at("object_id").get<int>();
      if (!ds.objects.count(inst.object_id)) continue;
      inst.scene_id = e.at("scene_id").get<int>();
      inst.image_id = e.at("image_id").get<int>();
      inst.gt = pose_from_json(e.at("gt"));
      PlyCloud pc = read_ply_cloud(dir / e.at("scene").get<std::string>());
      auto lifted = std::make_shared<LiftedCloud>();
      lifted->cloud = std::move(pc.cloud);
      lifted->pixels = std::move(pc.pixels);
      inst.scene = std::move(lifted);
      const std::string split = e.at("split").get<std::string>();
      (split == "train" ? ds.train : ds.heldout).push_back(std::move(inst));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(ParseError::Kind::kInvalidValue, (dir / "dataset.json").string() + ": " + ex.what());
  }
  if (std::filesystem::exists(dir / "detections.json")) ds.detections = read_detections(dir / "detections.json");
  return ds;
}

/// Pixel bbox of the model projected under `pose`, as a detection.
inline Detection projected_bbox(const ObjectModel& m, const RigidPose& pose, const CameraIntrinsics& intr) {
  Detection d;
  d.object_id = m.object_id;
  d.x_min = d.y_min = 1e18;
  d.x_max = d.y_max = -1e18;
  for (const Vec3& p : m.cloud.positions) {
    const Vec3 c = pose.apply(p);
    if (!(c.z() > 0.0)) continue;
    const auto uv = project_point(intr, c);
    d.x_min = std::min(d.x_min, std::floor(uv[0]));
    d.y_min = std::min(d.y_min, std::floor(uv[1]));
    d.x_max = std::max(d.x_max, std::floor(uv[0]) + 1.0);
    d.y_max = std::max(d.y_max, std::floor(uv[1]) + 1.0);
  }
  if (d.x_max < d.x_min) throw DataError("object " + std::to_string(m.object_id) + " projects behind the camera");
  return d;
}

/// BOP layout. Training instances use scene crops around the projected model
/// (grown by detection_margin_px); evaluation instances keep the full image.
inline Dataset read_bop_dataset(const RunConfig& cfg, bool load_train = true, bool load_eval = true) {
  namespace fs = std::filesystem;
  const fs::path root(cfg.dataset_dir);
  Dataset ds;
  const fs::path models = root / "models";
  if (!fs::is_directory(models)) throw ParseError(ParseError::Kind::kMissing, "missing directory " + models.string());
  std::vector<fs::path> model_files;
  for (const auto& e : fs::directory_iterator(models))
    if (e.path().extension() == ".ply" && e.path().stem().string().rfind("obj_", 0) == 0) model_files.push_back(e.path());
  std::sort(model_files.begin(), model_files.end());
  for (const auto& p : model_files) {
    const int id = std::stoi(p.stem().string().substr(4));
    if (!dataset_detail::selected(cfg, id)) continue;
    ds.objects.emplace(id, dataset_detail::make_object(id, p.stem().string(), false, read_ply_model(p), cfg));
  }
  const auto load_split = [&](const std::string& split, bool crop, std::vector<Instance>& out) {
    const fs::path dir = root / split;
    if (!fs::is_directory(dir)) throw ParseError(ParseError::Kind::kMissing, "missing directory " + dir.string());
    std::vector<fs::path> scenes;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) scenes.push_back(e.path());
    std::sort(scenes.begin(), scenes.end());
    BopReadOptions opts;
    opts.hole_fill_iterations = cfg.hole_fill_iterations;
    for (const auto& scene_dir : scenes) {
      const int scene_id = std::stoi(scene_dir.filename().string());
      for (int image_id : list_bop_images(scene_dir)) {
        BopFrame frame = read_bop_scene(scene_dir, image_id, opts);
        auto full = std::make_shared<const LiftedCloud>(std::move(frame.scene));
        for (const GtObject& g : frame.objects) {
          if (!ds.objects.count(g.object_id)) continue;
          Instance inst;
          inst.scene_id = scene_id;
          inst.image_id = image_id;
          inst.object_id = g.object_id;
          inst.gt = g.pose;
          if (crop) {
            const Detection box = projected_bbox(ds.objects.at(g.object_id), g.pose, frame.intrinsics);
            const auto keep = crop_indices(full->pixels, box, cfg.detection_margin_px);
            if (keep.empty()) continue;
            auto lifted = std::make_shared<LiftedCloud>();
            lifted->cloud = full->cloud.select(keep);
            for (std::size_t k : keep) lifted->pixels.push_back(full->pixels[k]);
            inst.scene = std::move(lifted);
          } else {
            inst.scene = full;
          }
          out.push_back(std::move(inst));
        }
      }
    }
  };
  if (load_train) load_split(cfg.train_split, true, ds.train);
  if (load_eval) load_split(cfg.eval_split, false, ds.heldout);
  return ds;
}

inline Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.data_source == "bop") return read_bop_dataset(cfg);
  if (!cfg.dataset_dir.empty()) return read_synthetic_dataset(cfg.dataset_dir, cfg);
  return generate_synthetic_dataset(cfg);
}

/// Highest-confidence detection for an instance, if any.
inline const Detection* find_detection(const std::vector<Detection>& dets, const Instance& inst) {
  const Detection* best = nullptr;
  for (const Detection& d : dets) {
    if (d.object_id != inst.object_id || d.image_id != inst.image_id) continue;
    if (d.scene_id >= 0 && d.scene_id != inst.scene_id) continue;
    if (!best || d.confidence > best->confidence) best = &d;
  }
  return best;
}

}  // namespace posefeat
