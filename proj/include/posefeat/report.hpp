#pragma once

#include <cmath>
#include <limits>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefeat/metrics.hpp"

namespace posefeat {

struct InstanceResult {
  int scene_id = 0;
  int image_id = 0;
  int object_id = 0;
  bool ok = false;            // registration produced a pose
  std::string status = "ok";  // failure reason otherwise
  bool symmetric = false;
  double diameter = 0.0;
  double add = 0.0;
  double adds = 0.0;
  double rre = 0.0;     // rad
  double rte_cm = 0.0;  // cm
  double match_inlier_ratio = 0.0;   // gt inlier fraction of feature matches
  double ransac_inlier_ratio = 0.0;
  RigidPose pose;

  /// ADD-S for symmetric objects, ADD otherwise; +inf when registration failed.
  double addsd() const {
    if (!ok) return std::numeric_limits<double>::infinity();
    return symmetric ? adds : add;
  }
  bool success() const { return ok && addsd_success(addsd(), diameter); }
};

struct ObjectSummary {
  int object_id = 0;
  std::string name;
  bool symmetric = false;
  std::size_t instances = 0;
  double addsd_percent = 0.0;  // ADD(S)-0.1d
  double adds_auc = 0.0;       // ADD-S AUC
  double fmr = 0.0;
};

struct MetricReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  AucGrid auc_grid;
  double tau1_voxels = 5.0;
  double tau2_ratio = 0.05;
  double voxel_size = 2.0;
  std::vector<InstanceResult> instances;
  std::vector<ObjectSummary> objects;
  ObjectSummary overall;
  std::optional<DetectorDeltas> detector_deltas;

  /// Recomputes per-object and overall aggregates from `instances`.
  void summarize(const std::map<int, std::string>& names = {}) {
    std::map<int, std::vector<const InstanceResult*>> by_object;
    for (const auto& r : instances) by_object[r.object_id].push_back(&r);
    const auto summarize_group = [&](const std::vector<const InstanceResult*>& group) {
      ObjectSummary s;
      s.instances = group.size();
      if (group.empty()) return s;
      std::vector<std::uint8_t> success;
      std::vector<double> adds_errors, ratios;
      for (const auto* r : group) {
        success.push_back(r->success() ? 1 : 0);
        adds_errors.push_back(r->ok ? r->adds : std::numeric_limits<double>::infinity());
        ratios.push_back(r->match_inlier_ratio);
      }
      s.addsd_percent = success_rate(success);
      s.adds_auc = add_s_auc(adds_errors, auc_grid);
      s.fmr = fmr_from_ratios(ratios, tau2_ratio);
      return s;
    };
    objects.clear();
    std::vector<const InstanceResult*> all;
    for (const auto& [id, group] : by_object) {
      ObjectSummary s = summarize_group(group);
      s.object_id = id;
      s.symmetric = group.front()->symmetric;
      const auto it = names.find(id);
      s.name = it != names.end() ? it->second : "obj_" + std::to_string(id);
      objects.push_back(s);
      all.insert(all.end(), group.begin(), group.end());
    }
    overall = summarize_group(all);
    overall.name = "all";
  }
};

namespace report_detail {
inline nlohmann::json number_or_null(bool ok, double v) { return ok && std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json summary_json(const ObjectSummary& s) {
  return {{"object_id", s.object_id}, {"name", s.name}, {"symmetric", s.symmetric}, {"instances", s.instances},
          {"addsd_0.1d_percent", s.addsd_percent}, {"adds_auc_percent", s.adds_auc}, {"fmr", s.fmr}};
}

inline std::string fmt(double v, int prec = 3) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}
}  // namespace report_detail

inline nlohmann::json report_to_json(const MetricReport& r) {
  using report_detail::number_or_null;
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& x : r.instances) {
    nlohmann::json pose = nullptr;
    if (x.ok) {
      nlohmann::json rot = nlohmann::json::array(), t = nlohmann::json::array();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rot.push_back(x.pose.rotation(i, j));
      for (int i = 0; i < 3; ++i) t.push_back(x.pose.translation(i));
      pose = {{"R", rot}, {"t", t}};
    }
    inst.push_back({{"scene_id", x.scene_id}, {"image_id", x.image_id}, {"object_id", x.object_id},
                    {"status", x.status}, {"symmetric", x.symmetric}, {"diameter_mm", x.diameter},
                    {"add_mm", number_or_null(x.ok, x.add)}, {"adds_mm", number_or_null(x.ok, x.adds)},
                    {"addsd_mm", number_or_null(x.ok, x.addsd())}, {"success_0.1d", x.success()},
                    {"rre_rad", number_or_null(x.ok, x.rre)}, {"rte_cm", number_or_null(x.ok, x.rte_cm)},
                    {"match_inlier_ratio", x.match_inlier_ratio}, {"ransac_inlier_ratio", x.ransac_inlier_ratio},
                    {"pose", pose}});
  }
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& s : r.objects) objs.push_back(report_detail::summary_json(s));
  nlohmann::json j{{"config_hash", r.config_hash},
                   {"seed", r.seed},
                   {"auc", {{"t_min_mm", r.auc_grid.t_min}, {"t_max_mm", r.auc_grid.t_max}, {"step_mm", r.auc_grid.step}}},
                   {"fmr_thresholds", {{"tau1_voxels", r.tau1_voxels}, {"tau2_ratio", r.tau2_ratio}, {"voxel_size_mm", r.voxel_size}}},
                   {"overall", report_detail::summary_json(r.overall)},
                   {"objects", objs},
                   {"instances", inst}};
  if (r.detector_deltas)
    j["detector_deltas"] = {{"delta_s_to_f_percent", r.detector_deltas->s_to_f},
                            {"delta_f_to_s_percent", r.detector_deltas->f_to_s}};
  return j;
}

inline std::string report_to_csv(const MetricReport& r) {
  std::ostringstream os;
  os << "scene_id,image_id,object_id,status,symmetric,diameter_mm,add_mm,adds_mm,addsd_mm,success_0.1d,rre_rad,rte_cm,"
        "match_inlier_ratio,ransac_inlier_ratio\n";
  const auto num = [](bool ok, double v) {
    if (!ok || !std::isfinite(v)) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& x : r.instances) {
    std::string status = x.status;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ' ';
    os << x.scene_id << ',' << x.image_id << ',' << x.object_id << ',' << status << ',' << (x.symmetric ? 1 : 0) << ','
       << num(true, x.diameter) << ',' << num(x.ok, x.add) << ',' << num(x.ok, x.adds) << ',' << num(x.ok, x.addsd())
       << ',' << (x.success() ? 1 : 0) << ',' << num(x.ok, x.rre) << ',' << num(x.ok, x.rte_cm) << ','
       << num(true, x.match_inlier_ratio) << ',' << num(true, x.ransac_inlier_ratio) << '\n';
  }
  return os.str();
}

inline std::string report_to_text(const MetricReport& r) {
  using report_detail::fmt;
  std::ostringstream os;
  char line[256];
  os << "config " << r.config_hash << "  seed " << r.seed << "  AUC grid " << fmt(r.auc_grid.t_min, 0) << ".."
     << fmt(r.auc_grid.t_max, 0) << " mm step " << fmt(r.auc_grid.step, 2) << "  FMR tau1 " << fmt(r.tau1_voxels, 1)
     << " vox tau2 " << fmt(r.tau2_ratio, 3) << "\n\n";
  std::snprintf(line, sizeof(line), "%-6s %-12s %4s %5s %12s %12s %8s\n", "obj", "name", "sym", "n", "ADD(S)-0.1d",
                "ADD-S AUC", "FMR");
  os << line;
  const auto row = [&](const ObjectSummary& s, const std::string& id) {
    std::snprintf(line, sizeof(line), "%-6s %-12s %4s %5zu %12s %12s %8s\n", id.c_str(), s.name.c_str(),
                  s.symmetric ? "*" : "", s.instances, fmt(s.addsd_percent, 1).c_str(), fmt(s.adds_auc, 1).c_str(),
                  fmt(s.fmr, 3).c_str());
    os << line;
  };
  for (const auto& s : r.objects) row(s, std::to_string(s.object_id));
  row(r.overall, "all");
  if (r.detector_deltas)
    os << "\ndetector deltas: S->F " << fmt(r.detector_deltas->s_to_f, 1) << " %  F->S "
       << fmt(r.detector_deltas->f_to_s, 1) << " %\n";
  os << '\n';
  std::snprintf(line, sizeof(line), "%6s %6s %4s %10s %10s %8s %8s %8s %7s  %s\n", "scene", "image", "obj", "ADD",
                "ADD-S", "RRE", "RTE_cm", "inl", "succ", "status");
  os << line;
  for (const auto& x : r.instances) {
    std::snprintf(line, sizeof(line), "%6d %6d %4d %10s %10s %8s %8s %8s %7s  %s\n", x.scene_id, x.image_id,
                  x.object_id, x.ok ? fmt(x.add, 2).c_str() : "-", x.ok ? fmt(x.adds, 2).c_str() : "-",
                  x.ok ? fmt(x.rre, 4).c_str() : "-", x.ok ? fmt(x.rte_cm, 3).c_str() : "-",
                  fmt(x.match_inlier_ratio, 3).c_str(), x.success() ? "yes" : "no", x.status.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace posefeat
