#pragma once

// Run configuration: a flat JSON object. Every key is optional; missing keys
// take the defaults of the selected data_source, unknown keys are rejected.
// See configs/ for annotated presets.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefeat/augment.hpp"
#include "posefeat/errors.hpp"
#include "posefeat/loss.hpp"
#include "posefeat/optimizer.hpp"
#include "posefeat/registration.hpp"

namespace posefeat {

struct RunConfig {
  // Seeds.
  std::uint64_t seed = 1;       // training, augmentation, evaluation sampling
  std::uint64_t data_seed = 7;  // synthetic dataset generation

  // Data.
  std::string data_source = "synthetic";  // synthetic | bop
  std::string dataset_dir;                // BOP root or `synth` output; empty: generate in memory
  std::string train_split = "train";
  std::string eval_split = "test";
  std::vector<int> object_ids;            // empty: all
  std::vector<int> symmetric_object_ids;  // ADD-S dispatch
  std::size_t train_pairs = 200;
  std::size_t heldout_pairs = 40;
  double occlusion_max = 0.3;
  double noise_sigma = 1.0;
  std::size_t num_distractors = 3;
  double max_tilt = 0.0;
  std::size_t model_points = 4000;  // canonical object cloud
  int hole_fill_iterations = 0;
  int detection_margin_px = 5;

  // Sampling and model.
  std::size_t object_points = 4000;  // V_O
  std::size_t scene_points = 50000;  // V_S
  double voxel_size = 2.0;           // Q, mm
  int feature_dim = 32;              // F
  int hidden_dim = 64;
  double radius_r1 = 0.05;  // fraction of D_O
  double radius_r2 = 0.15;
  bool use_color = true;
  bool shared_weights = false;
  bool per_object_models = false;

  // Loss and mining.
  double tau_p = 4.0;
  std::size_t max_pairs = 1000;
  std::size_t scene_sample_cap = 10000;
  double mu_p = 0.1;
  double mu_n = 10.0;
  double lambda_p = 1.0;
  double lambda_no = 0.6;
  double lambda_ns = 0.4;
  double t_scale = 0.1;
  std::string negative_normalization = "per_anchor";  // per_anchor | positives

  // Optimisation.
  std::string optimizer = "adamw";
  std::string schedule = "cosine";  // cosine | exponential
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  double gamma = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
  int epochs = 12;
  std::size_t batch_pairs = 4;

  // Augmentation.
  bool aug_resample = true;
  bool aug_color_jitter = true;
  bool aug_random_erase = true;
  double jitter_brightness = 0.2;
  double jitter_contrast = 0.2;
  double jitter_saturation = 0.2;
  double jitter_hue = 0.05;
  double erase_rho = 0.1;
  bool erase_rho_mm = false;

  // Evaluation.
  double tau1_voxels = 5.0;
  double tau2_ratio = 0.05;
  std::size_t ransac_iterations = 10000;
  double ransac_confidence = 0.999;
  double ransac_threshold_voxels = 3.0;
  bool mutual_matching = false;
  double auc_step = 1.0;
  std::size_t fmr_pairs_per_epoch = 8;

  // Ablation runner.
  std::vector<std::uint64_t> ablation_seeds;  // empty: {seed}
  std::string ablation_mode = "one_at_a_time";  // one_at_a_time | cumulative

  LossConfig loss_config() const;
  OptimizerConfig optimizer_config() const;
  Schedule schedule_config() const;
  AugmentConfig augment_config() const;
  RansacConfig ransac_config() const;
  void validate() const;
};

/// Full-size sampling for BOP data, smaller clouds for the synthetic suite.
inline RunConfig default_config(const std::string& data_source) {
  RunConfig c;
  c.data_source = data_source;
  if (data_source == "synthetic") {
    c.object_points = 1500;
    c.scene_points = 5000;
    c.epochs = 12;
    c.batch_pairs = 2;
    c.max_pairs = 300;
    c.scene_sample_cap = 2000;
    c.model_points = 4000;
  } else if (data_source != "bop") {
    throw InvalidArgument("data_source must be 'synthetic' or 'bop', got '" + data_source + "'");
  }
  return c;
}

namespace config_detail {

template <class C, class F>
void for_each_field(C& c, F&& f) {
  f("seed", c.seed);
  f("data_seed", c.data_seed);
  f("data_source", c.data_source);
  f("dataset_dir", c.dataset_dir);
  f("train_split", c.train_split);
  f("eval_split", c.eval_split);
  f("object_ids", c.object_ids);
  f("symmetric_object_ids", c.symmetric_object_ids);
  f("train_pairs", c.train_pairs);
  f("heldout_pairs", c.heldout_pairs);
  f("occlusion_max", c.occlusion_max);
  f("noise_sigma", c.noise_sigma);
  f("num_distractors", c.num_distractors);
  f("max_tilt", c.max_tilt);
  f("model_points", c.model_points);
  f("hole_fill_iterations", c.hole_fill_iterations);
  f("detection_margin_px", c.detection_margin_px);
  f("object_points", c.object_points);
  f("scene_points", c.scene_points);
  f("voxel_size", c.voxel_size);
  f("feature_dim", c.feature_dim);
  f("hidden_dim", c.hidden_dim);
  f("radius_r1", c.radius_r1);
  f("radius_r2", c.radius_r2);
  f("use_color", c.use_color);
  f("shared_weights", c.shared_weights);
  f("per_object_models", c.per_object_models);
  f("tau_p", c.tau_p);
  f("max_pairs", c.max_pairs);
  f("scene_sample_cap", c.scene_sample_cap);
  f("mu_p", c.mu_p);
  f("mu_n", c.mu_n);
  f("lambda_p", c.lambda_p);
  f("lambda_no", c.lambda_no);
  f("lambda_ns", c.lambda_ns);
  f("t_scale", c.t_scale);
  f("negative_normalization", c.negative_normalization);
  f("optimizer", c.optimizer);
  f("schedule", c.schedule);
  f("lr_start", c.lr_start);
  f("lr_end", c.lr_end);
  f("gamma", c.gamma);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("epsilon", c.epsilon);
  f("weight_decay", c.weight_decay);
  f("epochs", c.epochs);
  f("batch_pairs", c.batch_pairs);
  f("aug_resample", c.aug_resample);
  f("aug_color_jitter", c.aug_color_jitter);
  f("aug_random_erase", c.aug_random_erase);
  f("jitter_brightness", c.jitter_brightness);
  f("jitter_contrast", c.jitter_contrast);
  f("jitter_saturation", c.jitter_saturation);
  f("jitter_hue", c.jitter_hue);
  f("erase_rho", c.erase_rho);
  f("erase_rho_mm", c.erase_rho_mm);
  f("tau1_voxels", c.tau1_voxels);
  f("tau2_ratio", c.tau2_ratio);
  f("ransac_iterations", c.ransac_iterations);
  f("ransac_confidence", c.ransac_confidence);
  f("ransac_threshold_voxels", c.ransac_threshold_voxels);
  f("mutual_matching", c.mutual_matching);
  f("auc_step", c.auc_step);
  f("fmr_pairs_per_epoch", c.fmr_pairs_per_epoch);
  f("ablation_seeds", c.ablation_seeds);
  f("ablation_mode", c.ablation_mode);
}

template <class T>
void read_value(const nlohmann::json& v, const std::string& key, T& out) {
  const auto bad = [&](const char* want) {
    throw ParseError(ParseError::Kind::kInvalidValue, "config key '" + key + "' must be " + want);
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad("a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad("a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    if (!v.is_array()) bad("a list of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer()) bad("a list of integers");
      out.push_back(e.get<int>());
    }
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    if (!v.is_array()) bad("a list of non-negative integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) bad("a list of non-negative integers");
      out.push_back(e.get<std::uint64_t>());
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad("a number");
    out = v.get<T>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) bad("a non-negative integer");
    out = v.get<T>();
  } else {
    if (!v.is_number_integer()) bad("an integer");
    out = v.get<T>();
  }
}

}  // namespace config_detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  config_detail::for_each_field(c, [&](const char* key, const auto& v) { j[key] = v; });
  return j;
}

/// Strict load: defaults are taken from data_source (read first), then every
/// present key overrides; unknown keys and type mismatches are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError(ParseError::Kind::kInvalidValue, "config must be a JSON object");
  std::string source = "synthetic";
  if (j.contains("data_source")) config_detail::read_value(j.at("data_source"), "data_source", source);
  RunConfig c = default_config(source);
  std::vector<std::string> known;
  config_detail::for_each_field(c, [&](const char* key, auto& v) {
    known.emplace_back(key);
    if (j.contains(key)) config_detail::read_value(j.at(key), key, v);
  });
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      std::string list;
      for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
      throw ParseError(ParseError::Kind::kInvalidValue, "unknown config key '" + key + "' (valid keys: " + list + ")");
    }
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::kMissing, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::kInvalidValue, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// FNV-1a 64 over the canonical (sorted-key) dump.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline LossConfig RunConfig::loss_config() const {
  LossConfig l;
  l.mu_p = mu_p;
  l.mu_n = mu_n;
  l.lambda_p = lambda_p;
  l.lambda_no = lambda_no;
  l.lambda_ns = lambda_ns;
  l.t_scale = t_scale;
  l.tau_p = tau_p;
  l.max_pairs = max_pairs;
  l.scene_sample_cap = scene_sample_cap;
  l.normalization =
      negative_normalization == "positives" ? NegativeNormalization::kPositives : NegativeNormalization::kPerAnchor;
  return l;
}

inline OptimizerConfig RunConfig::optimizer_config() const {
  OptimizerConfig o;
  o.rule = optimizer_rule_from_string(optimizer);
  o.beta1 = beta1;
  o.beta2 = beta2;
  o.epsilon = epsilon;
  o.weight_decay = weight_decay;
  return o;
}

inline Schedule RunConfig::schedule_config() const {
  return schedule == "exponential" ? Schedule::exponential(lr_start, gamma) : Schedule::cosine(lr_start, lr_end);
}

inline AugmentConfig RunConfig::augment_config() const {
  AugmentConfig a;
  a.object_points = object_points;
  a.scene_points = scene_points;
  a.resample = aug_resample;
  a.color_jitter = aug_color_jitter;
  a.random_erase = aug_random_erase;
  a.brightness = jitter_brightness;
  a.contrast = jitter_contrast;
  a.saturation = jitter_saturation;
  a.hue = jitter_hue;
  a.erase_rho = erase_rho;
  a.erase_rho_mm = erase_rho_mm;
  return a;
}

inline RansacConfig RunConfig::ransac_config() const {
  RansacConfig r;
  r.max_iterations = ransac_iterations;
  r.confidence = ransac_confidence;
  r.inlier_threshold = ransac_threshold_voxels * voxel_size;
  return r;
}

inline void RunConfig::validate() const {
  const auto fail = [](const std::string& m) { throw InvalidArgument("config: " + m); };
  if (data_source != "synthetic" && data_source != "bop") fail("data_source must be synthetic or bop");
  if (data_source == "bop" && dataset_dir.empty()) fail("dataset_dir is required for bop data");
  if (data_source == "synthetic" && dataset_dir.empty() && (train_pairs == 0 || heldout_pairs == 0))
    fail("train_pairs and heldout_pairs must be > 0");
  if (!(occlusion_max >= 0.0 && occlusion_max < 1.0)) fail("occlusion_max must lie in [0, 1)");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(max_tilt >= 0.0)) fail("max_tilt must be >= 0");
  if (model_points < 10) fail("model_points must be >= 10");
  if (hole_fill_iterations < 0) fail("hole_fill_iterations must be >= 0");
  if (detection_margin_px < 0) fail("detection_margin_px must be >= 0");
  if (object_points < 10 || scene_points < 10) fail("object_points and scene_points must be >= 10");
  if (!(voxel_size > 0.0)) fail("voxel_size must be > 0");
  if (feature_dim < 1 || hidden_dim < 1) fail("feature_dim and hidden_dim must be >= 1");
  if (!(radius_r1 > 0.0 && radius_r1 < radius_r2)) fail("need 0 < radius_r1 < radius_r2");
  if (max_pairs < 1 || scene_sample_cap < 1) fail("max_pairs and scene_sample_cap must be >= 1");
  if (negative_normalization != "per_anchor" && negative_normalization != "positives")
    fail("negative_normalization must be per_anchor or positives");
  loss_config().validate();
  optimizer_config().validate();
  if (schedule != "cosine" && schedule != "exponential") fail("schedule must be cosine or exponential");
  schedule_config().validate();
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_pairs < 1) fail("batch_pairs must be >= 1");
  augment_config().validate();
  if (!(tau1_voxels > 0.0)) fail("tau1_voxels must be > 0");
  if (!(tau2_ratio >= 0.0 && tau2_ratio < 1.0)) fail("tau2_ratio must lie in [0, 1)");
  ransac_config().validate();
  if (!(auc_step > 0.0)) fail("auc_step must be > 0");
  if (ablation_mode != "one_at_a_time" && ablation_mode != "cumulative")
    fail("ablation_mode must be one_at_a_time or cumulative");
}

}  // namespace posefeat
