#pragma once

// Model checkpoint, a JSON document:
//
//   {
//     "format": "posefeat-checkpoint",
//     "version": 1,
//     "feature_dim": F,
//     "config_hash": "<16 hex digits>",
//     "use_color": true,
//     "shared_weights": false,
//     "radius_fractions": [0.05, 0.15],
//     "descriptor_radii": [{"object_id": 1, "r1": ..., "r2": ...}, ...],
//     "models": {
//       "object": {"seed": s, "layers": [{"shape": [out, in], "weight": [...row-major...], "bias": [...]}, ...]},
//       "scene":  {...}            // omitted when shared_weights is true
//     }
//   }
//
// Doubles are written with round-trip precision, so save/load is lossless.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "json.hpp"
#include "posefeat/descriptors.hpp"
#include "posefeat/embedder.hpp"
#include "posefeat/errors.hpp"

namespace posefeat {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "posefeat-checkpoint";

struct Checkpoint {
  EmbeddingModel object_model;
  EmbeddingModel scene_model;  // a copy of object_model when shared_weights
  bool shared_weights = false;
  bool use_color = true;
  double r1_fraction = 0.05;
  double r2_fraction = 0.15;
  std::map<int, DescriptorRadii> radii;  // per object id
  std::string config_hash;

  int feature_dim() const { return object_model.output_dim(); }
};

namespace checkpoint_detail {

inline nlohmann::json model_to_json(const EmbeddingModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers()) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) b.push_back(l.bias(r));
    layers.push_back({{"shape", {l.weight.rows(), l.weight.cols()}}, {"weight", w}, {"bias", b}});
  }
  return {{"seed", m.seed()}, {"layers", layers}};
}

inline EmbeddingModel model_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& jl : j.at("layers")) {
    const auto shape = jl.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0)
      throw ParseError(ParseError::Kind::kInvalidValue, "checkpoint: bad layer shape");
    const auto w = jl.at("weight").get<std::vector<double>>();
    const auto b = jl.at("bias").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(shape[0] * shape[1]) || b.size() != static_cast<std::size_t>(shape[0]))
      throw ParseError(ParseError::Kind::kInvalidValue, "checkpoint: parameter count does not match layer shape");
    DenseLayer layer;
    layer.weight = Eigen::Map<const RowMatrix>(w.data(), shape[0], shape[1]);
    layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), shape[0]);
    layers.push_back(std::move(layer));
  }
  return EmbeddingModel::from_layers(std::move(layers), j.at("seed").get<std::uint64_t>());
}

}  // namespace checkpoint_detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json radii = nlohmann::json::array();
  for (const auto& [id, r] : ck.radii) radii.push_back({{"object_id", id}, {"r1", r.r1}, {"r2", r.r2}});
  nlohmann::json models = {{"object", checkpoint_detail::model_to_json(ck.object_model)}};
  if (!ck.shared_weights) models["scene"] = checkpoint_detail::model_to_json(ck.scene_model);
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"feature_dim", ck.feature_dim()},
          {"config_hash", ck.config_hash},
          {"use_color", ck.use_color},
          {"shared_weights", ck.shared_weights},
          {"radius_fractions", {ck.r1_fraction, ck.r2_fraction}},
          {"descriptor_radii", radii},
          {"models", models}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw ParseError(ParseError::Kind::kUnsupported, "not a posefeat checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw ParseError(ParseError::Kind::kUnsupported, "unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_hash = j.at("config_hash").get<std::string>();
    ck.use_color = j.at("use_color").get<bool>();
    ck.shared_weights = j.at("shared_weights").get<bool>();
    const auto fr = j.at("radius_fractions").get<std::vector<double>>();
    if (fr.size() != 2) throw ParseError(ParseError::Kind::kInvalidValue, "checkpoint: radius_fractions needs 2 values");
    ck.r1_fraction = fr[0];
    ck.r2_fraction = fr[1];
    for (const auto& r : j.at("descriptor_radii"))
      ck.radii[r.at("object_id").get<int>()] = {r.at("r1").get<double>(), r.at("r2").get<double>()};
    const auto& models = j.at("models");
    ck.object_model = checkpoint_detail::model_from_json(models.at("object"));
    ck.scene_model = ck.shared_weights ? ck.object_model : checkpoint_detail::model_from_json(models.at("scene"));
    const int f = j.at("feature_dim").get<int>();
    if (f != ck.object_model.output_dim() || f != ck.scene_model.output_dim())
      throw ParseError(ParseError::Kind::kInvalidValue, "checkpoint: feature_dim does not match model output width");
    if (ck.object_model.input_dim() != kDescriptorDim || ck.scene_model.input_dim() != kDescriptorDim)
      throw ParseError(ParseError::Kind::kInvalidValue, "checkpoint: model input width is not the descriptor width");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ck).dump(1) << '\n';
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::kMissing, "cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace posefeat
