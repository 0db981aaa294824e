// posefeat command-line front end.
//
// Exit codes: 0 ok, 1 usage / invalid argument, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "posefeat/ablation.hpp"
#include "posefeat/checkpoint.hpp"
#include "posefeat/config.hpp"
#include "posefeat/dataset.hpp"
#include "posefeat/pipeline.hpp"
#include "posefeat/report.hpp"

#ifndef POSEFEAT_GIT_REVISION
#define POSEFEAT_GIT_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using namespace posefeat;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out = "out";
  std::string format = "text";
};

void add_common(CLI::App* app, CommonFlags& f, bool with_out = true) {
  app->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Override the configuration seed");
  app->add_option("--jobs", f.jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  if (with_out) app->add_option("--out", f.out, "Output directory");
  app->add_option("--format", f.format, "Report format printed to stdout")
      ->check(CLI::IsMember({"json", "csv", "text"}));
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? default_config("synthetic") : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  const nlohmann::json m{{"command", command},
                         {"config_hash", config_hash(cfg)},
                         {"seed", cfg.seed},
                         {"data_seed", cfg.data_seed},
                         {"git_revision", POSEFEAT_GIT_REVISION},
                         {"config", config_to_json(cfg)}};
  write_text(dir / "manifest.json", m.dump(1) + "\n");
}

void print_report(const MetricReport& rep, const std::string& format) {
  if (format == "json")
    std::cout << report_to_json(rep).dump(1) << '\n';
  else if (format == "csv")
    std::cout << report_to_csv(rep);
  else
    std::cout << report_to_text(rep);
}

void write_report_files(const fs::path& dir, const MetricReport& rep) {
  write_text(dir / "report.json", report_to_json(rep).dump(1) + "\n");
  write_text(dir / "report.txt", report_to_text(rep));
  write_text(dir / "instances.csv", report_to_csv(rep));
  // Held-out FMR as a function of the inlier-ratio threshold tau2.
  std::vector<double> ratios;
  for (const auto& x : rep.instances) ratios.push_back(x.match_inlier_ratio);
  std::ostringstream curve;
  curve << "tau2_ratio,fmr\n";
  if (!ratios.empty())
    for (int k = 0; k <= 20; ++k) {
      const double tau2 = 0.01 * k;
      curve << tau2 << ',' << fmr_from_ratios(ratios, tau2) << '\n';
    }
  write_text(dir / "fmr_curve.csv", curve.str());
}

fs::path checkpoint_path(const fs::path& base, std::optional<int> object) {
  if (!object) return base;
  return base.parent_path() / (base.stem().string() + "_obj_" + std::to_string(*object) + base.extension().string());
}

int cmd_train(const CommonFlags& f) {
  const RunConfig cfg = resolve_config(f);
  const fs::path out(f.out);
  fs::create_directories(out);
  const Dataset ds = load_dataset(cfg);
  std::vector<std::optional<int>> runs{std::nullopt};
  if (cfg.per_object_models) {
    runs.clear();
    for (const auto& [id, _] : ds.objects) runs.emplace_back(id);
  }
  for (const auto& object : runs) {
    const std::string suffix = object ? "_obj_" + std::to_string(*object) : "";
    std::ofstream log(out / ("train_log" + suffix + ".jsonl"));
    TrainOptions opts;
    opts.jobs = f.jobs;
    opts.log = &log;
    opts.only_object = object;
    opts.failure_dump = out / ("failure" + suffix);
    const TrainResult r = train_models(cfg, ds, opts);
    save_checkpoint(checkpoint_path(out / "checkpoint.json", object), r.checkpoint);
    if (!r.epochs.empty()) {
      const EpochLog& last = r.epochs.back();
      std::cerr << "trained" << (object ? " object " + std::to_string(*object) : "") << ": " << r.epochs.size()
                << " epochs, final loss " << last.total << ", held-out FMR " << r.initial_fmr << " -> "
                << last.heldout_fmr << '\n';
    }
  }
  write_text(out / "config.json", config_to_json(cfg).dump(1) + "\n");
  write_manifest(out, "train", cfg);
  return kOk;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& detections_path) {
  const RunConfig cfg = resolve_config(f);
  const fs::path out(f.out);
  fs::create_directories(out);
  const Dataset ds = load_dataset(cfg);
  std::vector<Detection> dets;
  if (!detections_path.empty()) dets = read_detections(detections_path);
  EvalOptions opts;
  opts.jobs = f.jobs;
  opts.detections = detections_path.empty() ? nullptr : &dets;
  MetricReport rep;
  if (cfg.per_object_models) {
    std::vector<InstanceResult> with, without;
    for (const auto& [id, _] : ds.objects) {
      const Checkpoint ck = load_checkpoint(checkpoint_path(checkpoint, id));
      std::vector<Instance> subset;
      for (const Instance& i : ds.heldout)
        if (i.object_id == id) subset.push_back(i);
      const auto a = evaluate_instances(cfg, ck, ds, subset, opts.detections, f.jobs);
      with.insert(with.end(), a.begin(), a.end());
      if (opts.detections) {
        const auto b = evaluate_instances(cfg, ck, ds, subset, nullptr, f.jobs);
        without.insert(without.end(), b.begin(), b.end());
      }
    }
    rep = make_report(cfg, ds, with);
    if (opts.detections) {
      std::vector<std::uint8_t> fw, fo;
      for (std::size_t k = 0; k < with.size(); ++k) {
        fw.push_back(with[k].success() ? 1 : 0);
        fo.push_back(without[k].success() ? 1 : 0);
      }
      rep.detector_deltas = detector_deltas(fw, fo);
    }
  } else {
    const Checkpoint ck = load_checkpoint(checkpoint);
    rep = evaluate(cfg, ck, ds, opts);
  }
  write_report_files(out, rep);
  write_manifest(out, "eval", cfg);
  print_report(rep, f.format);
  return kOk;
}

int cmd_ablate(const CommonFlags& f, const std::vector<std::string>& axes) {
  const RunConfig cfg = resolve_config(f);
  const fs::path out(f.out);
  ablation_variants(cfg, axes);  // validates axis names before any training
  fs::create_directories(out);
  const auto rows = run_ablation(cfg, axes, f.jobs, &std::cerr);
  write_text(out / "ablation.json", ablation_to_json(rows, cfg).dump(1) + "\n");
  write_text(out / "ablation.csv", ablation_to_csv(rows));
  write_text(out / "ablation.txt", ablation_to_text(rows));
  write_manifest(out, "ablate", cfg);
  if (f.format == "json")
    std::cout << ablation_to_json(rows, cfg).dump(1) << '\n';
  else if (f.format == "csv")
    std::cout << ablation_to_csv(rows);
  else
    std::cout << ablation_to_text(rows);
  return kOk;
}

int cmd_synth(const CommonFlags& f) {
  RunConfig cfg = resolve_config(f);
  if (cfg.data_source != "synthetic") throw InvalidArgument("synth needs data_source = synthetic");
  cfg.dataset_dir.clear();
  const fs::path out(f.out);
  const Dataset ds = generate_synthetic_dataset(cfg);
  write_synthetic_dataset(out, ds, cfg);
  write_manifest(out, "synth", cfg);
  std::cerr << "wrote " << ds.train.size() << " training and " << ds.heldout.size() << " held-out instances to "
            << out.string() << '\n';
  return kOk;
}

/// Re-scores poses stored in an eval report against the dataset ground truth.
int cmd_metrics(const CommonFlags& f, const std::string& predictions) {
  const RunConfig cfg = resolve_config(f);
  const Dataset ds = load_dataset(cfg);
  const nlohmann::json pred = bop_detail::load_json(predictions);
  std::vector<InstanceResult> results;
  try {
    for (const auto& e : pred.at("instances")) {
      InstanceResult r;
      r.scene_id = e.at("scene_id").get<int>();
      r.image_id = e.at("image_id").get<int>();
      r.object_id = e.at("object_id").get<int>();
      r.match_inlier_ratio = e.value("match_inlier_ratio", 0.0);
      r.ransac_inlier_ratio = e.value("ransac_inlier_ratio", 0.0);
      const Instance* inst = nullptr;
      for (const Instance& i : ds.heldout)
        if (i.scene_id == r.scene_id && i.image_id == r.image_id && i.object_id == r.object_id) inst = &i;
      if (!inst || !ds.objects.count(r.object_id)) {
        r.status = "no matching ground truth";
        results.push_back(r);
        continue;
      }
      const ObjectModel& m = ds.object(r.object_id);
      r.symmetric = m.symmetric;
      r.diameter = m.diameter;
      if (!e.contains("pose") || e.at("pose").is_null()) {
        r.status = e.value("status", std::string("no pose"));
        results.push_back(r);
        continue;
      }
      r.pose = dataset_detail::pose_from_json(e.at("pose"));
      r.add = add_error(m.cloud, r.pose, inst->gt);
      r.adds = adds_error(m.cloud, r.pose, inst->gt);
      const PoseErrors pe = pose_errors(r.pose, inst->gt);
      r.rre = pe.rre;
      r.rte_cm = pe.rte_cm;
      r.ok = true;
      results.push_back(r);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(ParseError::Kind::kInvalidValue, predictions + ": " + ex.what());
  }
  const MetricReport rep = make_report(cfg, ds, std::move(results));
  const fs::path out(f.out);
  fs::create_directories(out);
  write_report_files(out, rep);
  write_manifest(out, "metrics", cfg);
  print_report(rep, f.format);
  return kOk;
}

/// Dumps the mined positives and negative-candidate counts of one training pair.
int cmd_inspect(const CommonFlags& f, std::size_t pair, int epoch) {
  const RunConfig cfg = resolve_config(f);
  const Dataset ds = load_dataset(cfg);
  if (pair >= ds.train.size())
    throw InvalidArgument("--pair " + std::to_string(pair) + " out of range (" + std::to_string(ds.train.size()) +
                          " training instances)");
  const Instance& inst = ds.train[pair];
  const ObjectModel& m = ds.object(inst.object_id);
  const TrainingPair p = prepare_training_pair(cfg, m, inst, radii_for(cfg, m), epoch, pair);
  const auto& obj = p.object.representatives.positions;
  const auto& scn = p.scene.representatives.positions;
  std::ostringstream os;
  if (f.format == "json") {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t k = 0; k < p.positives.size(); ++k) {
      const Correspondence& c = p.positives.pairs[k];
      const std::size_t sid = p.scene_rows[c.scene_id];
      rows.push_back({{"object_id", c.object_id}, {"scene_id", sid}, {"distance_mm", c.distance},
                      {"object_xyz", {obj[c.object_id].x(), obj[c.object_id].y(), obj[c.object_id].z()}},
                      {"scene_xyz", {scn[sid].x(), scn[sid].y(), scn[sid].z()}},
                      {"object_negatives", p.negatives.object_side[k].size()},
                      {"scene_negatives", p.negatives.scene_side[k].size()}});
    }
    os << nlohmann::json{{"pair", pair},
                         {"epoch", epoch},
                         {"object_id", inst.object_id},
                         {"object_points", obj.size()},
                         {"scene_points", scn.size()},
                         {"safety_radius_mm", p.negatives.safety_radius},
                         {"correspondences", rows}}
              .dump(1)
       << '\n';
  } else {
    const bool csv = f.format == "csv";
    if (!csv)
      os << "pair " << pair << " epoch " << epoch << " object " << inst.object_id << ": " << obj.size()
         << " object points, " << scn.size() << " scene points, " << p.positives.size()
         << " positives, safety radius " << p.negatives.safety_radius << " mm\n";
    os << (csv ? "object_id,scene_id,distance_mm,object_negatives,scene_negatives\n"
               : "object_id scene_id distance_mm object_negatives scene_negatives\n");
    const char sep = csv ? ',' : ' ';
    for (std::size_t k = 0; k < p.positives.size(); ++k) {
      const Correspondence& c = p.positives.pairs[k];
      os << c.object_id << sep << p.scene_rows[c.scene_id] << sep << c.distance << sep
         << p.negatives.object_side[k].size() << sep << p.negatives.scene_side[k].size() << '\n';
    }
  }
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_text(fs::path(f.out) / ("inspect_pair_" + std::to_string(pair) + "." + f.format), os.str());
  }
  std::cout << os.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posefeat: dense point features for object pose estimation"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, ablate_f, synth_f, metrics_f, inspect_f;
  std::string checkpoint = "out/checkpoint.json", detections, predictions;
  std::vector<std::string> axes;
  std::size_t pair = 0;
  int epoch = 0;

  auto* train = app.add_subcommand("train", "Train the object/scene embedding models");
  add_common(train, train_f);
  auto* eval = app.add_subcommand("eval", "Register held-out instances and compute metrics");
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint written by train");
  eval->add_option("--detections", detections, "Detections JSON used as a crop prior")->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one run per ablation toggle");
  add_common(ablate, ablate_f);
  ablate->add_option("--axes", axes, "Comma-separated ablation axes")->delimiter(',');
  auto* synth = app.add_subcommand("synth", "Write the synthetic dataset to --out");
  add_common(synth, synth_f);
  auto* metrics = app.add_subcommand("metrics", "Re-score the poses of an existing report");
  add_common(metrics, metrics_f);
  metrics->add_option("--predictions", predictions, "report.json from eval")->required()->check(CLI::ExistingFile);
  auto* inspect = app.add_subcommand("inspect", "Dump mined correspondences of one training pair");
  add_common(inspect, inspect_f);
  inspect_f.out.clear();
  inspect->add_option("--pair", pair, "Training instance index");
  inspect->add_option("--epoch", epoch, "Epoch whose augmentation draw is used")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_f);
    if (*eval) return cmd_eval(eval_f, checkpoint, detections);
    if (*ablate) return cmd_ablate(ablate_f, axes);
    if (*synth) return cmd_synth(synth_f);
    if (*metrics) return cmd_metrics(metrics_f, predictions);
    if (*inspect) return cmd_inspect(inspect_f, pair, epoch);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
