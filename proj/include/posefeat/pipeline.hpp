#pragma once

// Training and evaluation on top of the library modules.
//
// One training step on a pair: resample + colour jitter the object, resample +
// random erase the scene, quantize both, mine positives and negative
// candidates, embed, evaluate the loss and backpropagate. Scene descriptors and
// features are only computed for the scene rows the loss can touch (positive
// partners and the negative sample).
//
// Every random draw comes from derive_seed(cfg.seed, {tag, ...}) with the item
// index in the tags, and per-item results are combined in item order, so the
// outcome does not depend on the job count.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefeat/augment.hpp"
#include "posefeat/checkpoint.hpp"
#include "posefeat/config.hpp"
#include "posefeat/dataset.hpp"
#include "posefeat/descriptors.hpp"
#include "posefeat/embedder.hpp"
#include "posefeat/loss.hpp"
#include "posefeat/metrics.hpp"
#include "posefeat/mining.hpp"
#include "posefeat/optimizer.hpp"
#include "posefeat/parallel.hpp"
#include "posefeat/registration.hpp"
#include "posefeat/report.hpp"
#include "posefeat/voxelizer.hpp"

namespace posefeat {

namespace seed_tag {
inline constexpr std::uint64_t kModel = 0x10;
inline constexpr std::uint64_t kShuffle = 0x11;
inline constexpr std::uint64_t kResampleObject = 0x20;
inline constexpr std::uint64_t kJitter = 0x21;
inline constexpr std::uint64_t kResampleScene = 0x22;
inline constexpr std::uint64_t kErase = 0x23;
inline constexpr std::uint64_t kPositives = 0x24;
inline constexpr std::uint64_t kNegatives = 0x25;
inline constexpr std::uint64_t kEvalObject = 0x30;
inline constexpr std::uint64_t kEvalScene = 0x31;
inline constexpr std::uint64_t kRansac = 0x32;
}  // namespace seed_tag

inline const EmbeddingModel& scene_model_of(const Checkpoint& ck) {
  return ck.shared_weights ? ck.object_model : ck.scene_model;
}

/// Fresh Glorot-initialised model pair for `cfg`, radii filled in for `ds`.
inline Checkpoint init_checkpoint(const RunConfig& cfg, const Dataset& ds) {
  Checkpoint ck;
  const std::vector<int> widths{kDescriptorDim, cfg.hidden_dim, cfg.hidden_dim, cfg.feature_dim};
  ck.object_model = EmbeddingModel(widths, derive_seed(cfg.seed, {seed_tag::kModel, 0}));
  ck.scene_model = EmbeddingModel(widths, derive_seed(cfg.seed, {seed_tag::kModel, 1}));
  ck.shared_weights = cfg.shared_weights;
  if (ck.shared_weights) ck.scene_model = ck.object_model;
  ck.use_color = cfg.use_color;
  ck.r1_fraction = cfg.radius_r1;
  ck.r2_fraction = cfg.radius_r2;
  for (const auto& [id, m] : ds.objects) ck.radii[id] = radii_for(cfg, m);
  ck.config_hash = config_hash(cfg);
  return ck;
}

inline DescriptorRadii checkpoint_radii(const Checkpoint& ck, const ObjectModel& m) {
  const auto it = ck.radii.find(m.object_id);
  if (it != ck.radii.end()) return it->second;
  return DescriptorRadii::for_diameter(m.diameter, ck.r1_fraction, ck.r2_fraction);
}

// ---------------------------------------------------------------------------
// Training pairs

/// Quantized, mined and described training pair. Scene-side ids in `positives`
/// and `negatives` index `scene_rows` (compact), not the quantized scene.
struct TrainingPair {
  QuantizedCloud object;
  QuantizedCloud scene;
  CorrespondenceSet positives;
  NegativeCandidates negatives;
  std::vector<std::size_t> scene_rows;  // compact row -> quantized scene id
  DescriptorSet object_desc;
  DescriptorSet scene_desc;  // rows follow scene_rows
  double diameter = 0.0;
};

inline TrainingPair prepare_training_pair(const RunConfig& cfg, const ObjectModel& model, const Instance& inst,
                                          const DescriptorRadii& radii, int epoch, std::size_t item) {
  const auto e = static_cast<std::uint64_t>(epoch);
  const auto seed = [&](std::uint64_t tag) { return derive_seed(cfg.seed, {tag, e, item}); };
  const AugmentConfig aug = cfg.augment_config();

  PointCloud obj = model.cloud;
  if (aug.resample && obj.size() > cfg.object_points) obj = resample(obj, cfg.object_points, seed(seed_tag::kResampleObject));
  if (aug.color_jitter && obj.has_colors()) obj = color_jitter(obj, aug, seed(seed_tag::kJitter));

  PointCloud scn = inst.scene->cloud;
  if (aug.resample && scn.size() > cfg.scene_points) scn = resample(scn, cfg.scene_points, seed(seed_tag::kResampleScene));
  if (aug.random_erase) {
    EraseResult er = random_erase(scn, transform_points(obj.positions, inst.gt), aug.rho_for(model.diameter),
                                  seed(seed_tag::kErase));
    if (!er.flagged) scn = std::move(er.cloud);
  }

  TrainingPair p;
  p.diameter = model.diameter;
  p.object = quantize(obj, cfg.voxel_size);
  p.scene = quantize(scn, cfg.voxel_size);
  const NeighborIndex scene_index(p.scene.representatives.positions);
  p.positives = mine_positives(p.object.representatives, scene_index, inst.gt, cfg.tau_p, cfg.max_pairs,
                               seed(seed_tag::kPositives));
  p.negatives = build_negative_candidates(p.object.representatives, p.scene.representatives, p.positives, cfg.t_scale,
                                          model.diameter, cfg.scene_sample_cap, seed(seed_tag::kNegatives));

  // Compact scene rows: union of positive partners and the negative sample.
  p.scene_rows = p.negatives.scene_sample;
  for (const Correspondence& c : p.positives.pairs) p.scene_rows.push_back(c.scene_id);
  std::sort(p.scene_rows.begin(), p.scene_rows.end());
  p.scene_rows.erase(std::unique(p.scene_rows.begin(), p.scene_rows.end()), p.scene_rows.end());
  const auto compact = [&](std::size_t id) {
    return static_cast<std::size_t>(std::lower_bound(p.scene_rows.begin(), p.scene_rows.end(), id) - p.scene_rows.begin());
  };
  for (Correspondence& c : p.positives.pairs) c.scene_id = compact(c.scene_id);
  for (auto& list : p.negatives.scene_side)
    for (std::uint32_t& id : list) id = static_cast<std::uint32_t>(compact(id));

  const DescriptorOptions dopt{cfg.use_color, 1};
  const NeighborIndex object_index(p.object.representatives.positions);
  p.object_desc = compute_descriptors(p.object.representatives, object_index, radii, dopt);
  p.scene_desc = compute_descriptors(p.scene.representatives, scene_index, radii, dopt, p.scene_rows);
  return p;
}

struct PairStep {
  bool used = false;
  std::string skip_reason;
  LossBreakdown loss;  // gradients w.r.t. features cleared after use
  ModelGradients grad_object;
  ModelGradients grad_scene;  // unused when weights are shared
};

inline PairStep training_step(const RunConfig& cfg, const Checkpoint& ck, const ObjectModel& model, const Instance& inst,
                              int epoch, std::size_t item) {
  PairStep s;
  TrainingPair p;
  try {
    p = prepare_training_pair(cfg, model, inst, checkpoint_radii(ck, model), epoch, item);
  } catch (const MiningError& e) {
    s.skip_reason = e.what();
    return s;
  }
  const EmbeddingModel& mo = ck.object_model;
  const EmbeddingModel& ms = scene_model_of(ck);
  const EmbedResult fo = embed_forward(mo, p.object_desc.values);
  const EmbedResult fs = embed_forward(ms, p.scene_desc.values);
  s.loss = compute_loss(fo.features, fs.features, p.positives, p.negatives, cfg.loss_config());
  s.grad_object = embed_backward(mo, fo.cache, s.loss.grad_object);
  ModelGradients gs = embed_backward(ms, fs.cache, s.loss.grad_scene);
  if (ck.shared_weights) {
    s.grad_object.add(gs);
  } else {
    s.grad_scene = std::move(gs);
  }
  s.loss.grad_object.resize(0, 0);
  s.loss.grad_scene.resize(0, 0);
  s.used = true;
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation-time features

struct EmbeddedCloud {
  QuantizedCloud cloud;
  FeatureMatrix features;
};

inline EmbeddedCloud embed_cloud(const EmbeddingModel& model, const PointCloud& cloud, std::size_t max_points,
                                 std::uint64_t seed, double voxel_size, const DescriptorRadii& radii, bool use_color,
                                 std::size_t jobs = 1) {
  PointCloud c = cloud.size() > max_points ? resample(cloud, max_points, seed) : cloud;
  EmbeddedCloud out;
  out.cloud = quantize(c, voxel_size);
  const NeighborIndex index(out.cloud.representatives.positions);
  const DescriptorSet d = compute_descriptors(out.cloud.representatives, index, radii, {use_color, jobs});
  out.features = embed_forward(model, d.values, jobs).features;
  return out;
}

inline EmbeddedCloud embed_object(const RunConfig& cfg, const Checkpoint& ck, const ObjectModel& m, std::size_t jobs = 1) {
  return embed_cloud(ck.object_model, m.cloud, cfg.object_points,
                     derive_seed(cfg.seed, {seed_tag::kEvalObject, static_cast<std::uint64_t>(m.object_id)}),
                     cfg.voxel_size, checkpoint_radii(ck, m), ck.use_color, jobs);
}

inline std::uint64_t instance_tag(const Instance& inst) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(inst.scene_id)) << 40) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(inst.image_id)) << 12) ^
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(inst.object_id));
}

/// Scene cloud of an instance, cropped by its detection when one is given.
inline PointCloud instance_scene(const RunConfig& cfg, const Instance& inst, const Detection* det) {
  if (!det) return inst.scene->cloud;
  return crop_by_detection(inst.scene->cloud, inst.scene->pixels, *det, cfg.detection_margin_px);
}

inline EmbeddedCloud embed_scene(const RunConfig& cfg, const Checkpoint& ck, const ObjectModel& m,
                                 const PointCloud& scene, const Instance& inst, std::size_t jobs = 1) {
  return embed_cloud(scene_model_of(ck), scene, cfg.scene_points,
                     derive_seed(cfg.seed, {seed_tag::kEvalScene, instance_tag(inst)}), cfg.voxel_size,
                     checkpoint_radii(ck, m), ck.use_color, jobs);
}

/// Held-out feature-match recall of the current models on `instances`.
inline FmrResult heldout_fmr(const RunConfig& cfg, const Checkpoint& ck, const Dataset& ds,
                             const std::vector<const Instance*>& instances, std::size_t jobs) {
  std::map<int, EmbeddedCloud> objects;
  for (const Instance* inst : instances)
    if (!objects.count(inst->object_id)) objects.emplace(inst->object_id, embed_object(cfg, ck, ds.object(inst->object_id)));
  std::vector<double> ratios(instances.size());
  parallel_for(instances.size(), jobs, [&](std::size_t k) {
    const Instance& inst = *instances[k];
    const ObjectModel& m = ds.object(inst.object_id);
    const EmbeddedCloud& o = objects.at(inst.object_id);
    const EmbeddedCloud s = embed_scene(cfg, ck, m, inst.scene->cloud, inst);
    FmrPair pair{&o.features, &s.features, &o.cloud.representatives.positions, &s.cloud.representatives.positions,
                 inst.gt};
    ratios[k] = match_inlier_ratio(pair, cfg.tau1_voxels * cfg.voxel_size);
  });
  FmrResult r;
  r.inlier_ratios = ratios;
  r.fmr = ratios.empty() ? 0.0 : fmr_from_ratios(ratios, cfg.tau2_ratio);
  return r;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double l_p = 0.0, l_no = 0.0, l_ns = 0.0, total = 0.0;  // means over used pairs
  double heldout_fmr = 0.0;
  std::size_t pairs = 0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},     {"lr", lr},   {"l_p", l_p},           {"l_no", l_no},
            {"l_ns", l_ns},       {"total", total}, {"heldout_fmr", heldout_fmr}, {"pairs", pairs},
            {"skipped", skipped}};
  }
};

struct TrainResult {
  Checkpoint checkpoint;
  double initial_fmr = 0.0;
  std::vector<EpochLog> epochs;
};

struct TrainOptions {
  std::size_t jobs = 1;
  std::ostream* log = nullptr;                 // JSON lines, one per epoch (epoch -1: before training)
  std::optional<int> only_object;              // restrict training to one object id
  std::filesystem::path failure_dump;          // state dump on numerical failure, if non-empty
  bool track_fmr = true;
};

inline std::vector<const Instance*> fmr_subset(const RunConfig& cfg, const std::vector<Instance>& heldout,
                                               std::optional<int> only_object) {
  std::vector<const Instance*> pool;
  for (const Instance& i : heldout)
    if (!only_object || i.object_id == *only_object) pool.push_back(&i);
  if (pool.size() <= cfg.fmr_pairs_per_epoch) return pool;
  std::vector<const Instance*> out;
  for (std::size_t k = 0; k < cfg.fmr_pairs_per_epoch; ++k) out.push_back(pool[k * pool.size() / cfg.fmr_pairs_per_epoch]);
  return out;
}

inline void write_failure_dump(const std::filesystem::path& dir, const Checkpoint& ck, int epoch, const std::string& what) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "failure_checkpoint.json", ck);
  std::ofstream out(dir / "failure.json");
  out << nlohmann::json{{"epoch", epoch}, {"error", what}}.dump(1) << '\n';
}

inline TrainResult train_models(const RunConfig& cfg, const Dataset& ds, const TrainOptions& opts = {}) {
  cfg.validate();
  TrainResult res;
  res.checkpoint = init_checkpoint(cfg, ds);
  Checkpoint& ck = res.checkpoint;

  std::vector<const Instance*> train;
  for (const Instance& i : ds.train)
    if (!opts.only_object || i.object_id == *opts.only_object) train.push_back(&i);
  if (train.empty()) throw DataError("no training instances");
  const auto fmr_set = fmr_subset(cfg, ds.heldout, opts.only_object);

  const auto emit = [&](const EpochLog& e) {
    if (opts.log) *opts.log << e.to_json().dump() << '\n';
  };
  if (opts.track_fmr && !fmr_set.empty()) res.initial_fmr = heldout_fmr(cfg, ck, ds, fmr_set, opts.jobs).fmr;
  EpochLog init;
  init.epoch = -1;
  init.heldout_fmr = res.initial_fmr;
  emit(init);

  OptimState state(cfg.optimizer_config());
  const Schedule schedule = cfg.schedule_config();
  const std::size_t batch = cfg.batch_pairs;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at(schedule, epoch, cfg.epochs);
    std::vector<std::size_t> order(train.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    Rng shuffle_rng = make_rng(derive_seed(cfg.seed, {seed_tag::kShuffle, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t n = std::min(batch, order.size() - start);
        std::vector<PairStep> steps(n);
        parallel_for(n, opts.jobs, [&](std::size_t b) {
          const std::size_t item = order[start + b];
          const Instance& inst = *train[item];
          steps[b] = training_step(cfg, ck, ds.object(inst.object_id), inst, epoch, item);
        });
        ModelGradients g_obj = ModelGradients::zeros_like(ck.object_model);
        ModelGradients g_scn = ModelGradients::zeros_like(ck.scene_model);
        std::size_t used = 0;
        for (PairStep& s : steps) {
          if (!s.used) {
            ++log.skipped;
            continue;
          }
          ++used;
          log.l_p += s.loss.l_p;
          log.l_no += s.loss.l_no;
          log.l_ns += s.loss.l_ns;
          log.total += s.loss.total;
          g_obj.add(s.grad_object);
          if (!ck.shared_weights) g_scn.add(s.grad_scene);
        }
        if (used == 0) continue;
        log.pairs += used;
        const double inv = 1.0 / static_cast<double>(used);
        g_obj.scale(inv);
        std::vector<ParamBlock> params = ck.object_model.parameter_blocks();
        std::vector<ParamBlock> grads = g_obj.blocks();
        if (!ck.shared_weights) {
          g_scn.scale(inv);
          for (auto& b : ck.scene_model.parameter_blocks()) params.push_back({"scene." + b.name, b.values});
          for (auto& b : g_scn.blocks()) grads.push_back({"scene." + b.name, b.values});
          for (std::size_t k = 0; k < params.size() / 2; ++k) {
            params[k].name = "object." + params[k].name;
            grads[k].name = "object." + grads[k].name;
          }
        }
        state.step(params, grads, log.lr);
        if (ck.shared_weights) ck.scene_model = ck.object_model;
      }
    } catch (const NumericalError& e) {
      write_failure_dump(opts.failure_dump, ck, epoch, e.what());
      throw;
    }
    if (log.pairs > 0) {
      const double inv = 1.0 / static_cast<double>(log.pairs);
      log.l_p *= inv;
      log.l_no *= inv;
      log.l_ns *= inv;
      log.total *= inv;
    }
    if (!std::isfinite(log.total)) {
      write_failure_dump(opts.failure_dump, ck, epoch, "non-finite training loss");
      throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    }
    if (opts.track_fmr && !fmr_set.empty()) log.heldout_fmr = heldout_fmr(cfg, ck, ds, fmr_set, opts.jobs).fmr;
    emit(log);
    res.epochs.push_back(log);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  std::size_t jobs = 1;
  const std::vector<Detection>* detections = nullptr;  // crop prior
  bool compare_without_detections = true;              // emit detector deltas when detections are given
};

inline InstanceResult evaluate_instance(const RunConfig& cfg, const Checkpoint& ck, const ObjectModel& m,
                                        const EmbeddedCloud& object, const Instance& inst, const Detection* det) {
  InstanceResult r;
  r.scene_id = inst.scene_id;
  r.image_id = inst.image_id;
  r.object_id = inst.object_id;
  r.symmetric = m.symmetric;
  r.diameter = m.diameter;
  try {
    const PointCloud scene = instance_scene(cfg, inst, det);
    const EmbeddedCloud s = embed_scene(cfg, ck, m, scene, inst);
    const MatchSet matches = match_features(object.features, s.features, {cfg.mutual_matching, 1});
    std::size_t inl = 0;
    const double inlier_dist = cfg.tau1_voxels * cfg.voxel_size;
    for (const Match& x : matches.pairs)
      if ((inst.gt.apply(object.cloud.representatives.positions[x.object_id]) -
           s.cloud.representatives.positions[x.scene_id])
              .norm() < inlier_dist)
        ++inl;
    r.match_inlier_ratio = matches.empty() ? 0.0 : static_cast<double>(inl) / static_cast<double>(matches.size());
    RansacConfig rc = cfg.ransac_config();
    rc.seed = derive_seed(cfg.seed, {seed_tag::kRansac, instance_tag(inst)});
    if (matches.size() < 3) throw RegistrationFailure("fewer than 3 feature matches");
    const RansacResult reg = ransac_register(object.cloud.representatives, s.cloud.representatives, matches, rc);
    r.pose = reg.pose;
    r.ransac_inlier_ratio = reg.inlier_ratio;
    r.add = add_error(m.cloud, reg.pose, inst.gt);
    r.adds = adds_error(m.cloud, reg.pose, inst.gt);
    const PoseErrors pe = pose_errors(reg.pose, inst.gt);
    r.rre = pe.rre;
    r.rte_cm = pe.rte_cm;
    r.ok = true;
  } catch (const RegistrationFailure& e) {
    r.status = std::string("registration failed: ") + e.what();
  } catch (const DataError& e) {
    r.status = std::string("data error: ") + e.what();
  }
  return r;
}

inline std::vector<InstanceResult> evaluate_instances(const RunConfig& cfg, const Checkpoint& ck, const Dataset& ds,
                                                      const std::vector<Instance>& instances,
                                                      const std::vector<Detection>* detections, std::size_t jobs) {
  std::map<int, EmbeddedCloud> objects;
  for (const Instance& inst : instances) {
    if (objects.count(inst.object_id) || !ds.objects.count(inst.object_id)) continue;
    objects.emplace(inst.object_id, embed_object(cfg, ck, ds.object(inst.object_id), jobs));
  }
  std::vector<InstanceResult> out(instances.size());
  parallel_for(instances.size(), jobs, [&](std::size_t k) {
    const Instance& inst = instances[k];
    if (!ds.objects.count(inst.object_id)) {
      out[k].scene_id = inst.scene_id;
      out[k].image_id = inst.image_id;
      out[k].object_id = inst.object_id;
      out[k].status = "missing object model";
      return;
    }
    const Detection* det = detections ? find_detection(*detections, inst) : nullptr;
    out[k] = evaluate_instance(cfg, ck, ds.object(inst.object_id), objects.at(inst.object_id), inst, det);
  });
  return out;
}

inline MetricReport make_report(const RunConfig& cfg, const Dataset& ds, std::vector<InstanceResult> results) {
  MetricReport rep;
  rep.config_hash = config_hash(cfg);
  rep.seed = cfg.seed;
  rep.auc_grid.step = cfg.auc_step;
  rep.tau1_voxels = cfg.tau1_voxels;
  rep.tau2_ratio = cfg.tau2_ratio;
  rep.voxel_size = cfg.voxel_size;
  rep.instances = std::move(results);
  std::map<int, std::string> names;
  for (const auto& [id, m] : ds.objects) names[id] = m.name;
  rep.summarize(names);
  return rep;
}

inline MetricReport evaluate(const RunConfig& cfg, const Checkpoint& ck, const Dataset& ds, const EvalOptions& opts = {}) {
  MetricReport rep = make_report(cfg, ds, evaluate_instances(cfg, ck, ds, ds.heldout, opts.detections, opts.jobs));
  if (opts.detections && opts.compare_without_detections) {
    const auto without = evaluate_instances(cfg, ck, ds, ds.heldout, nullptr, opts.jobs);
    std::vector<std::uint8_t> f_with, f_without;
    for (std::size_t k = 0; k < without.size(); ++k) {
      f_with.push_back(rep.instances[k].success() ? 1 : 0);
      f_without.push_back(without[k].success() ? 1 : 0);
    }
    rep.detector_deltas = detector_deltas(f_with, f_without);
  }
  return rep;
}

}  // namespace posefeat
