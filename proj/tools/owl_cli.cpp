// Command-line surface for the pipeline: synthetic data generation, proposal
// generator training/inference, classifier training, detection, evaluation
// and the ablation sweeps. Every command is deterministic given its config
// and seed, and every artifact embeds {tool_version, config_hash, seed}.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "owl/config.hpp"
#include "owl/evaltal.hpp"
#include "owl/featstore.hpp"
#include "owl/fusion.hpp"
#include "owl/owl_model.hpp"
#include "owl/proposals.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace owl;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
  cmd->add_option("--out", opts.out_dir, "output directory (overrides out_dir)");
  cmd->add_option("--seed", opts.seed, "seed (overrides config)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--set", opts.overrides, "extra key=value overrides")
      ->expected(-1);
}

RunConfig resolve_config(const CommonOpts& opts) {
  KvConfig kv;
  if (!opts.config_path.empty()) kv.load_file(opts.config_path);
  for (const std::string& kvpair : opts.overrides) {
    size_t eq = kvpair.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, "--set expects key=value, got '" + kvpair + "'");
    kv.set(kvpair.substr(0, eq), kvpair.substr(eq + 1));
  }
  if (!opts.out_dir.empty()) kv.set("out_dir", opts.out_dir);
  if (opts.seed_set) kv.set("seed", std::to_string(opts.seed));
  return build_run_config(kv);
}

void require(bool present, const std::string& path, const std::string& producer) {
  if (!present)
    fail(ErrorKind::dependency,
         "missing " + path + " (run " + producer + " first)");
}

fs::path tem_ckpt_path(const RunConfig& rc) {
  return fs::path(rc.out_dir) / "tem.ckpt";
}
fs::path classifier_ckpt_path(const RunConfig& rc) {
  return fs::path(rc.out_dir) / "classifier.ckpt";
}
fs::path proposals_dir(const RunConfig& rc) {
  return fs::path(rc.out_dir) / "proposals";
}
fs::path detections_dir(const RunConfig& rc) {
  return fs::path(rc.out_dir) / "detections";
}

Corpus load_corpus_checked(const RunConfig& rc) {
  require(fs::exists(rc.corpus_dir), rc.corpus_dir, "gen-data");
  return read_corpus(rc.corpus_dir);
}

std::vector<std::vector<Proposal>> load_proposals_for(const RunConfig& rc,
                                                      const Corpus& corpus) {
  std::vector<std::vector<Proposal>> out;
  for (const AnnotatedVideo& v : corpus.videos) {
    fs::path p = proposals_dir(rc) / (v.video_id + ".json");
    require(fs::exists(p), p.string(), "gen-proposals");
    auto [id, props] = read_proposals(p.string());
    if (id != v.video_id)
      fail(ErrorKind::join, p.string() + ": video_id '" + id + "' does not match");
    out.push_back(std::move(props));
  }
  return out;
}

int cmd_gen_data(const CommonOpts& opts) {
  RunConfig rc = resolve_config(opts);
  SynthCorpus corpus = generate_synthetic(rc.synth, rc.seed);
  write_corpus(rc.corpus_dir, corpus);
  json meta = json::parse(rc.meta_json());
  meta["videos"] = corpus.videos.size();
  meta["classes"] = corpus.classes.size();
  fs::create_directories(rc.out_dir);
  std::ofstream((fs::path(rc.out_dir) / "gen_data_meta.json").string())
      << meta.dump(2) << "\n";
  std::cout << "wrote " << corpus.videos.size() << " videos to " << rc.corpus_dir
            << "\n";
  return 0;
}

int cmd_train_proposals(const CommonOpts& opts) {
  RunConfig rc = resolve_config(opts);
  Corpus corpus = load_corpus_checked(rc);
  Rng rng(Rng::mix(rc.seed, 0x7e400001));
  TemModel model =
      make_tem_model(rc.tem, tem_input_dim(corpus.videos[0], rc.tem.modality), rng);
  TrainCurve curve = train_tem(model, corpus.videos, rc.tem);
  fs::create_directories(rc.out_dir);
  save_tem_model(tem_ckpt_path(rc).string(), model, rc.meta_json());
  std::ofstream csv((fs::path(rc.out_dir) / "tem_loss.csv").string());
  csv << "epoch,loss\n";
  for (size_t i = 0; i < curve.epoch_loss.size(); ++i)
    csv << i << "," << curve.epoch_loss[i] << "\n";
  std::cout << "trained TEM (" << to_string(rc.tem.modality) << ") final loss "
            << curve.epoch_loss.back() << " -> " << tem_ckpt_path(rc).string() << "\n";
  return 0;
}

int cmd_gen_proposals(const CommonOpts& opts) {
  RunConfig rc = resolve_config(opts);
  Corpus corpus = load_corpus_checked(rc);
  require(fs::exists(tem_ckpt_path(rc)), tem_ckpt_path(rc).string(), "train-proposals");
  TemModel model = load_tem_model(tem_ckpt_path(rc).string());
  fs::create_directories(proposals_dir(rc));
  std::vector<std::vector<Proposal>> all;
  std::vector<const AnnotatedVideo*> videos;
  for (const AnnotatedVideo& v : corpus.videos) {
    WindowPlan plan = plan_windows(v.visual.len, model.cfg.window, model.cfg.stride);
    auto props = generate_proposals(model, v, plan, rc.prop);
    write_proposals((proposals_dir(rc) / (v.video_id + ".json")).string(), v.video_id,
                    props, rc.meta_json());
    all.push_back(std::move(props));
    videos.push_back(&v);
  }
  RecallTable ar = average_recall(all, videos, default_ar_budgets(), default_ar_tious());
  for (const std::string& id : ar.skipped_videos)
    std::cerr << "warning: video " << id << " has no ground truth, excluded from AR\n";
  json j;
  j["meta"] = json::parse(rc.meta_json());
  j["budgets"] = ar.budgets;
  j["tious"] = ar.tious;
  json recall = json::array();
  for (int b = 0; b < ar.recall.rows; ++b) {
    json row = json::array();
    for (int t = 0; t < ar.recall.cols; ++t) row.push_back(ar.recall.at(b, t));
    recall.push_back(row);
  }
  j["recall"] = recall;
  j["ar_per_budget"] = ar.ar_per_budget;
  j["ar_at_100"] = ar.ar_at_100;
  std::ofstream((fs::path(rc.out_dir) / "ar_report.json").string()) << j.dump(2) << "\n";
  std::cout << "proposals for " << corpus.videos.size() << " videos, AR@100 = "
            << ar.ar_at_100 << "\n";
  return 0;
}

int cmd_train_classifier(const CommonOpts& opts) {
  RunConfig rc = resolve_config(opts);
  Corpus corpus = load_corpus_checked(rc);
  auto proposals = load_proposals_for(rc, corpus);
  std::vector<OwlTrainInput> data;
  for (size_t i = 0; i < corpus.videos.size(); ++i)
    data.push_back({&corpus.videos[i], proposals[i]});
  fs::create_directories(rc.out_dir);
  TrainCurve curve;
  if (rc.classifier_kind == "owl") {
    Rng rng(Rng::mix(rc.seed, 0x0310c0de));
    OwlModel model = make_owl_model(rc.owl, corpus.taxonomy, corpus.videos[0].visual.dim,
                                    corpus.videos[0].audio.dim, rng);
    curve = train_owl(model, data, corpus.taxonomy, rc.owl);
    save_owl_model(classifier_ckpt_path(rc).string(), model, rc.meta_json());
  } else {
    Rng rng(Rng::mix(rc.seed, 0xf0510001));
    FusionModel model = make_fusion_model(rc.fusion, corpus.taxonomy,
                                          corpus.videos[0].visual.dim,
                                          corpus.videos[0].audio.dim, rng);
    curve = train_fusion(model, data, corpus.taxonomy, rc.fusion);
    save_fusion_model(classifier_ckpt_path(rc).string(), model, rc.meta_json());
  }
  std::ofstream csv((fs::path(rc.out_dir) / "classifier_loss.csv").string());
  csv << "epoch,loss\n";
  for (size_t i = 0; i < curve.epoch_loss.size(); ++i)
    csv << i << "," << curve.epoch_loss[i] << "\n";
  std::cout << "trained " << rc.classifier_kind << " classifier, final loss "
            << curve.epoch_loss.back() << " -> " << classifier_ckpt_path(rc).string()
            << "\n";
  return 0;
}

int cmd_detect(const CommonOpts& opts) {
  RunConfig rc = resolve_config(opts);
  Corpus corpus = load_corpus_checked(rc);
  auto proposals = load_proposals_for(rc, corpus);
  require(fs::exists(classifier_ckpt_path(rc)), classifier_ckpt_path(rc).string(),
          "train-classifier");
  fs::create_directories(detections_dir(rc));
  Checkpoint ck = read_checkpoint(classifier_ckpt_path(rc).string());
  json cfg = json::parse(ck.config_json);
  std::string kind = cfg.value("kind", "");
  size_t total = 0;
  if (kind == "owl") {
    OwlModel model = load_owl_model(classifier_ckpt_path(rc).string());
    for (size_t i = 0; i < corpus.videos.size(); ++i) {
      auto dets = detect(model, proposals[i], corpus.videos[i], corpus.taxonomy);
      total += dets.size();
      write_detections(
          (detections_dir(rc) / (corpus.videos[i].video_id + ".json")).string(),
          corpus.videos[i].video_id, dets, rc.meta_json());
    }
  } else if (kind == "fusion") {
    FusionModel model = load_fusion_model(classifier_ckpt_path(rc).string());
    for (size_t i = 0; i < corpus.videos.size(); ++i) {
      auto dets = detect_fusion(model, proposals[i], corpus.videos[i], corpus.taxonomy);
      total += dets.size();
      write_detections(
          (detections_dir(rc) / (corpus.videos[i].video_id + ".json")).string(),
          corpus.videos[i].video_id, dets, rc.meta_json());
    }
  } else {
    fail(ErrorKind::parse, "unknown classifier kind in checkpoint: " + kind);
  }
  std::cout << "wrote " << total << " detections for " << corpus.videos.size()
            << " videos\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& baseline_dir) {
  RunConfig rc = resolve_config(opts);
  Corpus corpus = load_corpus_checked(rc);
  std::vector<const AnnotatedVideo*> videos;
  std::vector<std::vector<Detection>> dets;
  for (const AnnotatedVideo& v : corpus.videos) {
    fs::path p = detections_dir(rc) / (v.video_id + ".json");
    require(fs::exists(p), p.string(), "detect");
    auto [id, d] = read_detections(p.string());
    if (id != v.video_id) fail(ErrorKind::join, p.string() + ": video_id mismatch");
    dets.push_back(std::move(d));
    videos.push_back(&v);
  }
  EvalReport report = evaluate(dets, videos, corpus.taxonomy, rc.eval);
  fs::path eval_dir = fs::path(rc.out_dir) / "eval";
  fs::create_directories(eval_dir);
  std::ofstream((eval_dir / "report.json").string())
      << report_to_json(report, rc.meta_json());
  std::ofstream((eval_dir / "report.txt").string()) << report_to_text(report);

  PartitionReport parts = occlusion_partition_report(dets, videos, corpus.taxonomy, rc.eval);
  std::string occ_json;
  if (!baseline_dir.empty()) {
    std::vector<std::vector<Detection>> base;
    for (const AnnotatedVideo& v : corpus.videos) {
      fs::path p = fs::path(baseline_dir) / (v.video_id + ".json");
      require(fs::exists(p), p.string(), "detect (baseline)");
      base.push_back(read_detections(p.string()).second);
    }
    ImprovementReport imp =
        occlusion_improvement(base, dets, videos, corpus.taxonomy, rc.eval);
    occ_json = partition_report_to_json(parts, &imp, rc.meta_json());
  } else {
    occ_json = partition_report_to_json(parts, nullptr, rc.meta_json());
  }
  std::ofstream((eval_dir / "occlusion.json").string()) << occ_json;
  std::cout << report_to_text(report);
  return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::string& sweep) {
  RunConfig rc = resolve_config(opts);
  Corpus corpus = load_corpus_checked(rc);
  fs::path ablate_dir = fs::path(rc.out_dir) / "ablate";
  fs::create_directories(ablate_dir);
  if (sweep == "window") {
    auto proposals = load_proposals_for(rc, corpus);
    auto rows = window_ablation(corpus.videos, corpus.taxonomy, proposals,
                                rc.ablate_windows, rc.ablate_seeds, rc.owl, rc.eval);
    std::ofstream csv((ablate_dir / "window.csv").string());
    csv << "window,mean_avg_map,sd";
    for (size_t s = 0; s < rc.ablate_seeds.size(); ++s)
      csv << ",seed" << rc.ablate_seeds[s];
    csv << "\n";
    for (const AblationRow& r : rows) {
      csv << (r.window < 0 ? std::string("full") : std::to_string(r.window)) << ","
          << r.mean << "," << r.sd;
      for (double v : r.per_seed) csv << "," << v;
      csv << "\n";
      std::cout << "W=" << (r.window < 0 ? std::string("full") : std::to_string(r.window))
                << "  avg mAP " << r.mean << " +- " << r.sd << "\n";
    }
  } else if (sweep == "modality-grid") {
    ModalityGrid grid = modality_grid(corpus.videos, corpus.taxonomy, rc.ablate_seeds,
                                      rc.tem, rc.prop, rc.fusion, rc.eval);
    std::ofstream csv((ablate_dir / "modality_grid.csv").string());
    csv << "generator";
    for (const std::string& c : grid.cls_labels) csv << "," << c;
    csv << "\n";
    for (int g = 0; g < 3; ++g) {
      csv << grid.gen_labels[g];
      for (int c = 0; c < 3; ++c) csv << "," << grid.mean.at(g, c);
      csv << "\n";
      std::cout << grid.gen_labels[g];
      for (int c = 0; c < 3; ++c) std::cout << "  " << grid.mean.at(g, c);
      std::cout << "\n";
    }
  } else {
    fail(ErrorKind::config, "ablate: sweep must be window or modality-grid");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OWL separate-stage temporal action localization pipeline"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string baseline_dir;
  std::string sweep = "window";

  CLI::App* gen_data = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen_data, opts);
  CLI::App* train_props =
      app.add_subcommand("train-proposals", "train the proposal generator");
  add_common(train_props, opts);
  CLI::App* gen_props =
      app.add_subcommand("gen-proposals", "run the generator and write proposals + AR");
  add_common(gen_props, opts);
  CLI::App* train_cls =
      app.add_subcommand("train-classifier", "train the OWL or fusion classifier");
  add_common(train_cls, opts);
  CLI::App* detect_cmd = app.add_subcommand("detect", "classify proposals");
  add_common(detect_cmd, opts);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate detections");
  add_common(eval_cmd, opts);
  eval_cmd->add_option("--baseline", baseline_dir,
                       "baseline detections dir for the improvement table");
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "window or modality-grid sweep");
  add_common(ablate_cmd, opts);
  ablate_cmd->add_option("--sweep", sweep, "window | modality-grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_data->parsed()) return cmd_gen_data(opts);
    if (train_props->parsed()) return cmd_train_proposals(opts);
    if (gen_props->parsed()) return cmd_gen_proposals(opts);
    if (train_cls->parsed()) return cmd_train_classifier(opts);
    if (detect_cmd->parsed()) return cmd_detect(opts);
    if (eval_cmd->parsed()) return cmd_eval(opts, baseline_dir);
    if (ablate_cmd->parsed()) return cmd_ablate(opts, sweep);
  } catch (const Error& e) {
    std::cerr << "error kind=" << error_kind_name(e.kind()) << " msg=\"" << e.what()
              << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal msg=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
