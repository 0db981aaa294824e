#pragma once

// Ablation runner: one training + evaluation per configuration variant and
// seed, reported as per-row medians with a delta column.

#include <algorithm>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefeat/config.hpp"
#include "posefeat/dataset.hpp"
#include "posefeat/pipeline.hpp"

namespace posefeat {

inline const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"safety-threshold", "shared-weights", "rgb",      "color-jitter",
                                             "random-erase",     "optimizer",      "schedule", "t_scale-sweep"};
  return axes;
}

struct AblationVariant {
  std::string axis;  // empty for the baseline
  std::string label;
  RunConfig config;
};

namespace ablation_detail {

using Edit = std::pair<std::string, std::function<void(RunConfig&)>>;

inline std::vector<Edit> axis_edits(const std::string& axis, const RunConfig& base) {
  const auto on_off = [](bool v) { return std::string(v ? "on" : "off"); };
  if (axis == "safety-threshold") return {{"t_scale=0", [](RunConfig& c) { c.t_scale = 0.0; }}};
  if (axis == "shared-weights")
    return {{base.shared_weights ? "independent weights" : "shared weights",
             [](RunConfig& c) { c.shared_weights = !c.shared_weights; }}};
  if (axis == "rgb") return {{"rgb " + on_off(!base.use_color), [](RunConfig& c) { c.use_color = !c.use_color; }}};
  if (axis == "color-jitter")
    return {{"color jitter " + on_off(!base.aug_color_jitter), [](RunConfig& c) { c.aug_color_jitter = !c.aug_color_jitter; }}};
  if (axis == "random-erase")
    return {{"random erase " + on_off(!base.aug_random_erase), [](RunConfig& c) { c.aug_random_erase = !c.aug_random_erase; }}};
  if (axis == "optimizer") {
    std::vector<Edit> out;
    for (const char* rule : {"sgd", "adam", "adamw"})
      if (base.optimizer != rule) out.push_back({std::string("optimizer ") + rule, [rule](RunConfig& c) { c.optimizer = rule; }});
    return out;
  }
  if (axis == "schedule") {
    const std::string other = base.schedule == "cosine" ? "exponential" : "cosine";
    return {{"schedule " + other, [other](RunConfig& c) { c.schedule = other; }}};
  }
  if (axis == "t_scale-sweep") {
    std::vector<Edit> out;
    for (double t : {0.0, 0.05, 0.1, 0.25, 0.5}) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "t_scale=%g", t);
      out.push_back({buf, [t](RunConfig& c) { c.t_scale = t; }});
    }
    return out;
  }
  std::string list;
  for (const auto& a : ablation_axes()) list += (list.empty() ? "" : ", ") + a;
  throw InvalidArgument("unknown ablation axis '" + axis + "' (valid axes: " + list + ")");
}

}  // namespace ablation_detail

/// Baseline first, then one row per toggle. In cumulative mode each row builds
/// on the previous one.
inline std::vector<AblationVariant> ablation_variants(const RunConfig& base, const std::vector<std::string>& axes) {
  std::vector<AblationVariant> out{{"", "baseline", base}};
  const bool cumulative = base.ablation_mode == "cumulative";
  RunConfig current = base;
  for (const std::string& axis : axes) {
    for (auto& [label, edit] : ablation_detail::axis_edits(axis, cumulative ? current : base)) {
      RunConfig c = cumulative ? current : base;
      edit(c);
      c.validate();
      out.push_back({axis, label, c});
      if (cumulative) current = c;
    }
  }
  return out;
}

struct RunMetrics {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double heldout_fmr = 0.0;
  double addsd_percent = 0.0;
  double adds_auc = 0.0;
};

struct AblationRow {
  std::string axis;
  std::string label;
  std::string config_hash;
  std::vector<RunMetrics> runs;
  RunMetrics median;
  RunMetrics delta;  // versus the baseline (or the previous row when cumulative)
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Train + evaluate one configuration. Held-out FMR is measured on the full
/// held-out split after the last epoch.
inline RunMetrics run_single(const RunConfig& cfg, const Dataset& ds, std::size_t jobs, bool evaluate_poses = true) {
  TrainOptions to;
  to.jobs = jobs;
  to.track_fmr = false;
  const TrainResult tr = train_models(cfg, ds, to);
  RunMetrics m;
  m.seed = cfg.seed;
  m.final_loss = tr.epochs.empty() ? 0.0 : tr.epochs.back().total;
  std::vector<const Instance*> all;
  for (const Instance& i : ds.heldout) all.push_back(&i);
  m.heldout_fmr = heldout_fmr(cfg, tr.checkpoint, ds, all, jobs).fmr;
  if (evaluate_poses) {
    const MetricReport rep = evaluate(cfg, tr.checkpoint, ds, {jobs, nullptr, false});
    m.addsd_percent = rep.overall.addsd_percent;
    m.adds_auc = rep.overall.adds_auc;
  }
  return m;
}

inline std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::string>& axes, std::size_t jobs,
                                             std::ostream* progress = nullptr) {
  const auto variants = ablation_variants(base, axes);
  std::vector<std::uint64_t> seeds = base.ablation_seeds;
  if (seeds.empty()) seeds.push_back(base.seed);
  const Dataset ds = load_dataset(base);
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : variants) {
    AblationRow row;
    row.axis = v.axis;
    row.label = v.label;
    row.config_hash = config_hash(v.config);
    for (std::uint64_t s : seeds) {
      RunConfig c = v.config;
      c.seed = s;
      row.runs.push_back(run_single(c, ds, jobs));
      if (progress) *progress << "ablation: " << v.label << " seed " << s << " done\n";
    }
    std::vector<double> loss, fmr_v, addsd, auc;
    for (const RunMetrics& r : row.runs) {
      loss.push_back(r.final_loss);
      fmr_v.push_back(r.heldout_fmr);
      addsd.push_back(r.addsd_percent);
      auc.push_back(r.adds_auc);
    }
    row.median = {0, median_of(loss), median_of(fmr_v), median_of(addsd), median_of(auc)};
    rows.push_back(row);
  }
  const bool cumulative = base.ablation_mode == "cumulative";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const RunMetrics& ref = rows[cumulative && k > 0 ? k - 1 : 0].median;
    const RunMetrics& m = rows[k].median;
    rows[k].delta = {0, m.final_loss - ref.final_loss, m.heldout_fmr - ref.heldout_fmr,
                     m.addsd_percent - ref.addsd_percent, m.adds_auc - ref.adds_auc};
  }
  return rows;
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows, const RunConfig& base) {
  const auto metrics = [](const RunMetrics& m) {
    return nlohmann::json{{"final_loss", m.final_loss}, {"heldout_fmr", m.heldout_fmr},
                          {"addsd_0.1d_percent", m.addsd_percent}, {"adds_auc_percent", m.adds_auc}};
  };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& x : r.runs) {
      nlohmann::json j = metrics(x);
      j["seed"] = x.seed;
      runs.push_back(j);
    }
    out.push_back({{"axis", r.axis}, {"label", r.label}, {"config_hash", r.config_hash}, {"median", metrics(r.median)},
                   {"delta", metrics(r.delta)}, {"runs", runs}});
  }
  return {{"config_hash", config_hash(base)}, {"mode", base.ablation_mode}, {"rows", out}};
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string s = "axis,label,config_hash,final_loss,heldout_fmr,addsd_0.1d_percent,adds_auc_percent,"
                  "delta_final_loss,delta_heldout_fmr,delta_addsd_0.1d_percent,delta_adds_auc_percent\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.axis.c_str(),
                  r.label.c_str(), r.config_hash.c_str(), r.median.final_loss, r.median.heldout_fmr,
                  r.median.addsd_percent, r.median.adds_auc, r.delta.final_loss, r.delta.heldout_fmr,
                  r.delta.addsd_percent, r.delta.adds_auc);
    s += buf;
  }
  return s;
}

inline std::string ablation_to_text(const std::vector<AblationRow>& rows) {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-18s %-24s %10s %8s %8s %12s %8s %8s\n", "axis", "row", "loss", "FMR", "dFMR",
                "ADD(S)-0.1d", "dADD(S)", "AUC");
  s += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-18s %-24s %10.4f %8.3f %+8.3f %12.1f %+8.1f %8.1f\n",
                  r.axis.empty() ? "-" : r.axis.c_str(), r.label.c_str(), r.median.final_loss, r.median.heldout_fmr,
                  r.delta.heldout_fmr, r.median.addsd_percent, r.delta.addsd_percent, r.median.adds_auc);
    s += buf;
  }
  return s;
}

}  // namespace posefeat
