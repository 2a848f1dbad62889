// Command-line front end: synthesize data, train, detect, evaluate and
// analyze length-group sensitivity.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tal/config.hpp"
#include "tal/data.hpp"
#include "tal/eval.hpp"
#include "tal/trainer.hpp"

namespace fs = std::filesystem;
using namespace tal;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_writable(const fs::path& p, bool force) {
  if (fs::exists(p) && !force)
    throw DataError(p.string() + " exists; pass --force to overwrite");
}

FeatureStore load_feature_dir(const fs::path& dir, const Dataset& ds) {
  FeatureStore store;
  for (const auto& v : ds.videos) {
    const fs::path f = dir / (v.id + ".feat");
    if (!fs::exists(f))
      throw DataError("missing feature file " + f.string());
    store.emplace(v.id, load_features(f.string()));
  }
  return store;
}

struct CommonOpts {
  std::string config_path;
  std::string out;
  bool force = false;
  bool seed_set = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required = true) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  auto* out = cmd->add_option("--out", o.out, "output directory or file");
  if (out_required) out->required();
  cmd->add_flag("--force", o.force, "overwrite existing outputs");
  cmd->add_option("--seed", o.seed, "override the config seed")
      ->each([&](const std::string&) { o.seed_set = true; });
}

RunConfig effective_run_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path, cfg);
  if (o.seed_set) cfg.seed = o.seed;
  return cfg;
}

void echo_config(const fs::path& dir, const std::string& json_text,
                 const std::string& name) {
  fs::create_directories(dir);
  atomic_write_text((dir / name).string(), json_text);
}

int cmd_synth(const CommonOpts& o) {
  SynthConfig cfg;
  if (!o.config_path.empty()) cfg = load_synth_config(o.config_path, cfg);
  if (o.seed_set) cfg.seed = o.seed;

  const fs::path out(o.out);
  require_writable(out / "annotations.json", o.force);
  fs::create_directories(out / "features");

  auto [dataset, features] = generate_synthetic(cfg);
  save_annotations((out / "annotations.json").string(), dataset);

  std::vector<std::string> files = {"annotations.json", "synth_config.json",
                                    "class_scores.json", "manifest.json"};
  for (const auto& [id, f] : features) {
    const std::string rel = "features/" + id + ".feat";
    save_features((out / rel).string(), f);
    files.push_back(rel);
  }

  // Stand-in for an external video-level classifier: the planted class
  // scores high, the others low.
  ClassScores scores;
  for (const auto& v : dataset.videos) {
    for (const auto& name : dataset.labels) scores[v.id][name] = 0.05;
    for (const auto& [seg, label] : v.annotations)
      scores[v.id][dataset.labels[label]] = 1.0;
  }
  save_class_scores((out / "class_scores.json").string(), scores);

  echo_config(out, synth_config_to_json(cfg), "synth_config.json");
  std::ostringstream manifest;
  manifest << "{\n  \"version\": \"taldet-manifest-v1\",\n  \"files\": [\n";
  for (std::size_t i = 0; i < files.size(); ++i)
    manifest << "    \"" << files[i] << (i + 1 < files.size() ? "\",\n" : "\"\n");
  manifest << "  ]\n}\n";
  atomic_write_text((out / "manifest.json").string(), manifest.str());
  std::cout << "synth: wrote " << dataset.videos.size() << " videos to "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o, const std::string& data_dir,
              const std::string& resume) {
  RunConfig cfg = effective_run_config(o);
  const fs::path data(data_dir), out(o.out);
  if (resume.empty()) require_writable(out / "checkpoint.ckpt", o.force);

  Dataset dataset = load_annotations((data / "annotations.json").string());
  FeatureStore features = load_feature_dir(data / "features", dataset);
  if (dataset.videos.empty()) throw DataError("train: empty dataset");
  const int feature_dim = features.begin()->second.dim();

  TrainState state;
  if (!resume.empty()) {
    Checkpoint ckpt = load_checkpoint(resume);
    if (!ckpt.has_optimizer)
      throw DataError("train: checkpoint has no optimizer state to resume");
    state.params = std::move(ckpt.params);
    state.opt = std::move(ckpt.opt);
    state.next_epoch = ckpt.next_epoch;
    state.run_seed = ckpt.run_seed;
  } else {
    state = init_train_state(cfg, feature_dim);
  }

  fs::create_directories(out);
  echo_config(out, run_config_to_json(cfg), "config.json");

  std::ostringstream log;
  log << "epoch\tlr\tbce\tmse\toffset\tboundary\tl2\ttotal\n";
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    const LossReport r = train_epoch(state, dataset, features, cfg, epoch);
    state.next_epoch = epoch + 1;
    log << epoch << '\t' << fmt17(lr_at_epoch(cfg, epoch)) << '\t'
        << fmt17(r.bce) << '\t' << fmt17(r.mse) << '\t' << fmt17(r.offset)
        << '\t' << fmt17(r.boundary) << '\t' << fmt17(r.l2) << '\t'
        << fmt17(r.total) << '\n';
    std::cout << "epoch " << epoch << " total " << r.total << "\n";
  }
  atomic_write_text((out / "loss_log.tsv").string(), log.str());

  Checkpoint ckpt;
  ckpt.params = state.params;
  ckpt.has_optimizer = true;
  ckpt.opt = state.opt;
  ckpt.next_epoch = state.next_epoch;
  ckpt.run_seed = state.run_seed;
  save_checkpoint((out / "checkpoint.ckpt").string(), ckpt);
  std::cout << "train: wrote " << (out / "checkpoint.ckpt").string() << "\n";
  return 0;
}

int cmd_detect(const CommonOpts& o, const std::string& checkpoint,
               const std::string& data_dir, const std::string& split_name_arg,
               const std::string& class_scores_path) {
  RunConfig cfg = effective_run_config(o);
  const fs::path data(data_dir), out(o.out);
  require_writable(out, o.force);

  Dataset dataset = load_annotations((data / "annotations.json").string());
  FeatureStore features = load_feature_dir(data / "features", dataset);
  Checkpoint ckpt = load_checkpoint(checkpoint);

  Split split = Split::val;
  if (split_name_arg == "train") split = Split::train;
  else if (split_name_arg == "val") split = Split::val;
  else if (split_name_arg == "test") split = Split::test;
  else throw DataError("detect: unknown split '" + split_name_arg + "'");

  ClassScores scores;
  const ClassScores* scores_ptr = nullptr;
  fs::path cls_path = class_scores_path.empty()
                          ? data / "class_scores.json"
                          : fs::path(class_scores_path);
  if (fs::exists(cls_path)) {
    scores = load_class_scores(cls_path.string());
    scores_ptr = &scores;
  }

  auto dets =
      detect_dataset(ckpt.params, dataset, features, cfg, scores_ptr, split);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_detections(out.string(), dets);
  if (out.has_parent_path())
    echo_config(out.parent_path(), run_config_to_json(cfg),
                "detect_config.json");
  std::cout << "detect: wrote " << dets.size() << " detections to "
            << out.string() << "\n";
  return 0;
}

// Ground truth for the split, restricted to videos the detections mention;
// detections naming unknown videos are an error.
std::pair<std::vector<Detection>, std::vector<GtInstance>> eval_inputs(
    const std::string& det_path, const std::string& ann_path,
    const std::string& split_name_arg) {
  Dataset dataset = load_annotations(ann_path);
  std::vector<Detection> dets = load_detections(det_path);
  std::set<std::string> known;
  for (const auto& v : dataset.videos) known.insert(v.id);
  for (const auto& d : dets)
    if (!known.count(d.video))
      throw DataError("eval: unknown video id '" + d.video + "' in " +
                      det_path);
  Split split = Split::val;
  if (split_name_arg == "train") split = Split::train;
  else if (split_name_arg == "val") split = Split::val;
  else if (split_name_arg == "test") split = Split::test;
  else throw DataError("eval: unknown split '" + split_name_arg + "'");
  std::vector<GtInstance> gts = gather_gt_instances(dataset, split);
  std::set<std::string> in_split;
  for (const auto& v : dataset.videos)
    if (v.split == split) in_split.insert(v.id);
  std::vector<Detection> kept;
  for (auto& d : dets)
    if (in_split.count(d.video)) kept.push_back(std::move(d));
  return {std::move(kept), std::move(gts)};
}

int cmd_eval(const CommonOpts& o, const std::string& det_path,
             const std::string& ann_path, std::vector<double> thresholds,
             const std::string& split_arg, int recall_q) {
  const fs::path out(o.out);
  require_writable(out / "report.json", o.force);
  auto [dets, gts] = eval_inputs(det_path, ann_path, split_arg);
  if (thresholds.empty()) thresholds = {0.3, 0.4, 0.5, 0.6, 0.7};

  EvalReport report;
  report.per_threshold_map = map_at(dets, gts, thresholds);
  report.average_map = average_map(dets, gts);
  report.group_threshold = 0.5;
  GroupProfile prof = length_group_profiles(dets, gts, report.group_threshold);
  report.per_group_map = prof.map;
  report.per_group_fn_rate = prof.fn_rate;
  report.recall_q = recall_q;
  report.recall_at_q = recall_at(dets, gts, 0.5, recall_q);

  std::ostringstream human, machine;
  human << "detections: " << dets.size() << "  ground truths: " << gts.size()
        << "\n";
  machine << "{\n  \"per_threshold_map\": {";
  bool first = true;
  for (const auto& [thr, v] : report.per_threshold_map) {
    human << "mAP@" << thr << ": " << v << "\n";
    machine << (first ? "" : ", ") << "\"" << thr << "\": " << fmt17(v);
    first = false;
  }
  machine << "},\n";
  human << "average mAP (0.50:0.05:0.95): " << report.average_map << "\n";
  machine << "  \"average_map\": " << fmt17(report.average_map) << ",\n";
  human << "recall@" << recall_q << " (tIoU 0.5): " << report.recall_at_q
        << "\n";
  machine << "  \"recall_at_q\": " << fmt17(report.recall_at_q) << ",\n";
  machine << "  \"recall_q\": " << recall_q << ",\n";
  machine << "  \"group_threshold\": " << report.group_threshold << ",\n";
  machine << "  \"per_group_map\": {";
  first = true;
  for (const auto& [g, v] : report.per_group_map) {
    human << "group " << length_group_name(g) << ": mAP " << v << ", FN rate "
          << report.per_group_fn_rate.at(g) << "\n";
    machine << (first ? "" : ", ") << "\"" << length_group_name(g)
            << "\": " << fmt17(v);
    first = false;
  }
  machine << "},\n  \"per_group_fn_rate\": {";
  first = true;
  for (const auto& [g, v] : report.per_group_fn_rate) {
    machine << (first ? "" : ", ") << "\"" << length_group_name(g)
            << "\": " << fmt17(v);
    first = false;
  }
  machine << "}\n}\n";

  fs::create_directories(out);
  atomic_write_text((out / "report.txt").string(), human.str());
  atomic_write_text((out / "report.json").string(), machine.str());
  std::cout << human.str();
  return 0;
}

int cmd_analyze(const CommonOpts& o, const std::string& det_path,
                const std::string& ann_path, const std::string& split_arg,
                double threshold) {
  const fs::path out(o.out);
  require_writable(out / "length_groups.tsv", o.force);
  auto [dets, gts] = eval_inputs(det_path, ann_path, split_arg);

  GroupProfile prof = length_group_profiles(dets, gts, threshold);
  const double short_map = group_union_map(dets, gts, threshold,
                                           {LengthGroup::XS, LengthGroup::S});

  std::ostringstream human, tsv;
  tsv << "group\tmap\tfn_rate\tgt_count\n";
  std::map<LengthGroup, std::size_t> counts;
  for (const auto& g : gts) counts[length_group_of(g.segment.length())]++;
  for (LengthGroup g : {LengthGroup::XS, LengthGroup::S, LengthGroup::M,
                        LengthGroup::L, LengthGroup::XL}) {
    if (!prof.map.count(g)) {
      human << "group " << length_group_name(g) << ": no ground truths,"
            << " omitted\n";
      continue;
    }
    human << "group " << length_group_name(g) << ": mAP@" << threshold << " "
          << prof.map.at(g) << ", FN rate " << prof.fn_rate.at(g) << " ("
          << counts[g] << " ground truths)\n";
    tsv << length_group_name(g) << '\t' << fmt17(prof.map.at(g)) << '\t'
        << fmt17(prof.fn_rate.at(g)) << '\t' << counts[g] << '\n';
  }
  human << "short (XS+S) restricted mAP@" << threshold << ": " << short_map
        << "\n";

  fs::create_directories(out);
  atomic_write_text((out / "length_groups.txt").string(), human.str());
  atomic_write_text((out / "length_groups.tsv").string(), tsv.str());
  std::cout << human.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal action localization toolkit"};
  app.require_subcommand(1);

  CommonOpts synth_o, train_o, detect_o, eval_o, analyze_o;
  std::string data_dir, resume, checkpoint, det_path, ann_path;
  std::string split_arg = "val", class_scores_path;
  std::vector<double> thresholds;
  int recall_q = 100;
  double group_threshold = 0.5;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, synth_o);

  auto* train = app.add_subcommand("train", "train a scorer");
  add_common(train, train_o);
  train->add_option("--data", data_dir, "data directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* detect = app.add_subcommand("detect", "run inference");
  add_common(detect, detect_o);
  detect->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  detect->add_option("--data", data_dir, "data directory")->required();
  detect->add_option("--split", split_arg, "train|val|test (default val)");
  detect->add_option("--class-scores", class_scores_path,
                     "classification score file");

  auto* evalc = app.add_subcommand("eval", "score detections");
  add_common(evalc, eval_o);
  evalc->add_option("--detections", det_path, "detections file")->required();
  evalc->add_option("--annotations", ann_path, "annotation file")->required();
  evalc->add_option("--thresholds", thresholds, "tIoU thresholds");
  evalc->add_option("--split", split_arg, "train|val|test (default val)");
  evalc->add_option("--q", recall_q, "recall cutoff (default 100)");

  auto* analyze = app.add_subcommand("analyze", "length-group profiles");
  add_common(analyze, analyze_o);
  analyze->add_option("--detections", det_path, "detections file")->required();
  analyze->add_option("--annotations", ann_path, "annotation file")->required();
  analyze->add_option("--split", split_arg, "train|val|test (default val)");
  analyze->add_option("--threshold", group_threshold, "tIoU threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_o);
    if (train->parsed()) return cmd_train(train_o, data_dir, resume);
    if (detect->parsed())
      return cmd_detect(detect_o, checkpoint, data_dir, split_arg,
                        class_scores_path);
    if (evalc->parsed())
      return cmd_eval(eval_o, det_path, ann_path, thresholds, split_arg,
                      recall_q);
    if (analyze->parsed())
      return cmd_analyze(analyze_o, det_path, ann_path, split_arg,
                         group_threshold);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
