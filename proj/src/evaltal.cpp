#include "owl/evaltal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace owl {

using nlohmann::json;

double tiou(double a_s, double a_e, double b_s, double b_e) {
  if (!(a_s < a_e) || !(b_s < b_e))
    fail(ErrorKind::segment, "tiou: degenerate segment");
  double inter = std::min(a_e, b_e) - std::max(a_s, b_s);
  if (inter <= 0.0) return 0.0;
  double uni = std::max(a_e, b_e) - std::min(a_s, b_s);
  return inter / uni;
}

double average_precision(std::vector<ClassDet> dets, const std::vector<ClassGt>& gts,
                         double theta) {
  if (gts.empty())
    fail(ErrorKind::data, "average_precision: no ground truth for class");
  std::sort(dets.begin(), dets.end(), [](const ClassDet& a, const ClassDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    if (a.t_e != b.t_e) return a.t_e < b.t_e;
    return a.video < b.video;
  });
  std::vector<bool> taken(gts.size(), false);
  int n = static_cast<int>(dets.size());
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (int k = 0; k < n; ++k) {
    int best = -1;
    double best_ov = 0.0;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gts[gi].video != dets[k].video) continue;
      double ov = tiou(dets[k].t_s, dets[k].t_e, gts[gi].t_s, gts[gi].t_e);
      if (ov > best_ov ||
          (ov == best_ov && best >= 0 && gts[gi].t_s < gts[best].t_s)) {
        if (ov > 0.0) {
          best = static_cast<int>(gi);
          best_ov = ov;
        }
      }
    }
    if (best >= 0 && best_ov >= theta) {
      taken[best] = true;
      ++tp;
    }
    precision[k] = static_cast<double>(tp) / (k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(gts.size());
  }
  // Precision envelope: at each point use the max precision at >= that recall.
  double ap = 0.0, env = 0.0, prev_recall = 0.0;
  std::vector<double> env_at(n);
  for (int k = n - 1; k >= 0; --k) {
    env = std::max(env, precision[k]);
    env_at[k] = env;
  }
  for (int k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * env_at[k];
    prev_recall = recall[k];
  }
  return ap;
}

namespace {

// Detections and GTs keyed per class, with the class key rendered as a
// string ("v", "n" or "v,n" for actions).
struct TaskInstances {
  std::map<std::string, std::vector<ClassDet>> dets;
  std::map<std::string, std::vector<ClassGt>> gts;
};

std::string class_key(int verb, int noun, const std::string& task) {
  if (task == "verb") return std::to_string(verb);
  if (task == "noun") return std::to_string(noun);
  return std::to_string(verb) + "," + std::to_string(noun);
}

TaskInstances collect_task(const std::vector<std::vector<Detection>>& dets_per_video,
                           const std::vector<const AnnotatedVideo*>& videos,
                           const std::string& task,
                           const std::vector<std::vector<GtSegment>>& gt_universe) {
  TaskInstances ti;
  for (size_t vi = 0; vi < videos.size(); ++vi) {
    for (const Detection& d : dets_per_video[vi])
      ti.dets[class_key(d.verb, d.noun, task)].push_back(
          {d.t_s, d.t_e, d.score, static_cast<int>(vi)});
    for (const GtSegment& g : gt_universe[vi])
      ti.gts[class_key(g.verb, g.noun, task)].push_back(
          {g.t_s, g.t_e, static_cast<int>(vi)});
  }
  return ti;
}

EvalReport evaluate_universe(const std::vector<std::vector<Detection>>& dets_per_video,
                             const std::vector<const AnnotatedVideo*>& videos,
                             const Taxonomy& tax, const EvalConfig& cfg,
                             const std::vector<std::vector<GtSegment>>& gt_universe) {
  if (dets_per_video.size() != videos.size())
    fail(ErrorKind::join, "evaluate: detection/video list size mismatch");
  if (cfg.tious.empty()) fail(ErrorKind::config, "evaluate: no tIoU thresholds");
  for (size_t vi = 0; vi < videos.size(); ++vi)
    for (const Detection& d : dets_per_video[vi]) {
      bool ok = tax.mode == TaxonomyMode::verb_noun
                    ? tax.is_valid_action(d.verb, d.noun)
                    : d.verb >= 0 && d.verb < tax.n_verbs;
      if (!ok)
        fail(ErrorKind::label, "evaluate: detection label (" + std::to_string(d.verb) +
                                   "," + std::to_string(d.noun) + ") outside taxonomy");
    }

  std::vector<std::string> tasks = tax.mode == TaxonomyMode::verb_noun
                                       ? std::vector<std::string>{"verb", "noun", "action"}
                                       : std::vector<std::string>{"action"};
  EvalReport report;
  for (const std::string& task : tasks) {
    // In single_action mode the class lives in the verb slot.
    std::string effective = tax.mode == TaxonomyMode::single_action ? "verb" : task;
    TaskInstances ti = collect_task(dets_per_video, videos, effective, gt_universe);
    TaskReport tr;
    // Classes with at least one GT instance; others are excluded from means.
    std::vector<std::string> classes;
    for (const auto& [key, gts] : ti.gts)
      if (!gts.empty()) classes.push_back(key);
    tr.classes_evaluated = static_cast<int>(classes.size());
    std::map<std::string, double> class_ap_sum;
    double tiou_sum = 0.0;
    for (double theta : cfg.tious) {
      double ap_sum = 0.0;
      for (const std::string& key : classes) {
        auto it = ti.dets.find(key);
        double ap = average_precision(it == ti.dets.end() ? std::vector<ClassDet>{}
                                                          : it->second,
                                      ti.gts[key], theta);
        ap_sum += ap;
        class_ap_sum[key] += ap;
      }
      double map = classes.empty() ? 0.0 : ap_sum / static_cast<double>(classes.size());
      tr.map_at_tiou[theta] = map;
      tiou_sum += map;
    }
    tr.average_map = tiou_sum / static_cast<double>(cfg.tious.size());
    for (const auto& [key, sum] : class_ap_sum)
      tr.per_class_ap[key] = sum / static_cast<double>(cfg.tious.size());
    report.tasks[task] = tr;
  }
  return report;
}

}  // namespace

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_video,
                    const std::vector<const AnnotatedVideo*>& videos,
                    const Taxonomy& tax, const EvalConfig& cfg) {
  std::vector<std::vector<GtSegment>> universe;
  universe.reserve(videos.size());
  for (const AnnotatedVideo* v : videos) universe.push_back(v->segments);
  return evaluate_universe(dets_per_video, videos, tax, cfg, universe);
}

PartitionReport occlusion_partition_report(
    const std::vector<std::vector<Detection>>& dets_per_video,
    const std::vector<const AnnotatedVideo*>& videos, const Taxonomy& tax,
    const EvalConfig& cfg) {
  PartitionReport out;
  const std::vector<std::string> names = {"no", "low", "high"};
  for (const std::string& part : names) {
    std::vector<std::vector<GtSegment>> universe(videos.size());
    int count = 0;
    for (size_t vi = 0; vi < videos.size(); ++vi) {
      for (const GtSegment& g : videos[vi]->segments) {
        double f = g.occlusion_fraction;
        if (f < 0.0 || f > 1.0)
          fail(ErrorKind::metadata, "occlusion_partition_report: fraction outside [0,1]");
        std::string where = f <= cfg.occ_low ? "no" : (f < cfg.occ_high ? "low" : "high");
        if (where == part) {
          universe[vi].push_back(g);
          ++count;
        }
      }
    }
    out.gt_counts[part] = count;
    if (count > 0)
      out.partitions[part] =
          evaluate_universe(dets_per_video, videos, tax, cfg, universe);
  }
  return out;
}

ImprovementReport occlusion_improvement(
    const std::vector<std::vector<Detection>>& dets_a,
    const std::vector<std::vector<Detection>>& dets_b,
    const std::vector<const AnnotatedVideo*>& videos, const Taxonomy& tax,
    const EvalConfig& cfg) {
  PartitionReport pa = occlusion_partition_report(dets_a, videos, tax, cfg);
  PartitionReport pb = occlusion_partition_report(dets_b, videos, tax, cfg);
  ImprovementReport out;
  for (const auto& [part, report_a] : pa.partitions) {
    auto itb = pb.partitions.find(part);
    if (itb == pb.partitions.end()) continue;
    for (const auto& [task, tr_a] : report_a.tasks) {
      double a = tr_a.average_map;
      double b = itb->second.tasks.at(task).average_map;
      double imp;
      if (a == 0.0) {
        imp = b == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      } else {
        imp = 100.0 * (b - a) / a;
      }
      out.improvement[part][task] = imp;
    }
  }
  return out;
}

std::vector<AblationRow> window_ablation(
    const std::vector<AnnotatedVideo>& corpus, const Taxonomy& tax,
    const std::vector<std::vector<Proposal>>& proposals_per_video,
    const std::vector<int>& windows, const std::vector<uint64_t>& seeds,
    OwlConfig base_cfg, const EvalConfig& eval_cfg) {
  if (corpus.size() != proposals_per_video.size())
    fail(ErrorKind::join, "window_ablation: corpus/proposal size mismatch");
  if (windows.empty() || seeds.empty())
    fail(ErrorKind::config, "window_ablation: need windows and seeds");

  int max_tokens = 0;
  for (const auto& props : proposals_per_video)
    max_tokens = std::max(max_tokens, static_cast<int>(props.size()));

  std::vector<const AnnotatedVideo*> video_ptrs;
  std::vector<OwlTrainInput> data;
  for (size_t vi = 0; vi < corpus.size(); ++vi) {
    video_ptrs.push_back(&corpus[vi]);
    data.push_back({&corpus[vi], proposals_per_video[vi]});
  }

  std::vector<AblationRow> rows;
  for (int w : windows) {
    AblationRow row;
    row.window = w;
    int effective = w >= 0 ? w : 2 * max_tokens;  // -1 = full attention
    for (uint64_t seed : seeds) {
      OwlConfig cfg = base_cfg;
      cfg.window = effective;
      cfg.seed = seed;
      Rng rng(Rng::mix(seed, 0xab1a7e00));
      OwlModel model = make_owl_model(cfg, tax, corpus[0].visual.dim,
                                      corpus[0].audio.dim, rng);
      train_owl(model, data, tax, cfg);
      std::vector<std::vector<Detection>> dets;
      for (size_t vi = 0; vi < corpus.size(); ++vi)
        dets.push_back(detect(model, proposals_per_video[vi], corpus[vi], tax));
      EvalReport report = evaluate(dets, video_ptrs, tax, eval_cfg);
      row.per_seed.push_back(report.tasks.at("action").average_map);
    }
    double mean = 0.0;
    for (double v : row.per_seed) mean += v;
    mean /= static_cast<double>(row.per_seed.size());
    double var = 0.0;
    for (double v : row.per_seed) var += (v - mean) * (v - mean);
    row.mean = mean;
    row.sd = row.per_seed.size() > 1
                 ? std::sqrt(var / static_cast<double>(row.per_seed.size() - 1))
                 : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

json task_to_json(const TaskReport& tr) {
  json mt = json::object();
  for (const auto& [theta, v] : tr.map_at_tiou) {
    std::ostringstream key;
    key << theta;
    mt[key.str()] = v;
  }
  json pc = json::object();
  for (const auto& [cls, ap] : tr.per_class_ap) pc[cls] = ap;
  return {{"map_at_tiou", mt},
          {"average_map", tr.average_map},
          {"per_class_ap", pc},
          {"classes_evaluated", tr.classes_evaluated}};
}

}  // namespace

std::string report_to_json(const EvalReport& report, const std::string& meta_json) {
  json tasks = json::object();
  for (const auto& [task, tr] : report.tasks) tasks[task] = task_to_json(tr);
  json j = {{"tasks", tasks}};
  if (!meta_json.empty()) j["meta"] = json::parse(meta_json);
  return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  for (const auto& [task, tr] : report.tasks) {
    os << "task " << task << "  (classes: " << tr.classes_evaluated << ")\n";
    os << "  tIoU   ";
    for (const auto& [theta, v] : tr.map_at_tiou) os << "  " << theta;
    os << "\n  mAP    ";
    for (const auto& [theta, v] : tr.map_at_tiou) os << "  " << v;
    os << "\n  average mAP: " << tr.average_map << "\n";
  }
  return os.str();
}

std::string partition_report_to_json(const PartitionReport& parts,
                                     const ImprovementReport* improvement,
                                     const std::string& meta_json) {
  json jparts = json::object();
  for (const auto& [part, report] : parts.partitions) {
    json tasks = json::object();
    for (const auto& [task, tr] : report.tasks) tasks[task] = task_to_json(tr);
    jparts[part] = {{"tasks", tasks}};
  }
  json counts = json::object();
  for (const auto& [part, n] : parts.gt_counts) counts[part] = n;
  json j = {{"partitions", jparts}, {"gt_counts", counts}};
  if (improvement) {
    json imp = json::object();
    for (const auto& [part, tasks] : improvement->improvement) {
      json t = json::object();
      for (const auto& [task, v] : tasks) {
        if (std::isinf(v)) {
          t[task] = "inf";
        } else {
          t[task] = v;
        }
      }
      imp[part] = t;
    }
    j["improvement_percent"] = imp;
  }
  if (!meta_json.empty()) j["meta"] = json::parse(meta_json);
  return j.dump(2) + "\n";
}

}  // namespace owl
