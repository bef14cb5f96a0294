#pragma once

#include <map>
#include <string>
#include <vector>

#include "owl/featstore.hpp"
#include "owl/owl_model.hpp"

namespace owl {

// Temporal intersection-over-union of [a_s, a_e] and [b_s, b_e].
double tiou(double a_s, double a_e, double b_s, double b_e);

struct EvalConfig {
  std::vector<double> tious{0.1, 0.2, 0.3, 0.4, 0.5};
  double occ_low = 0.0;   // occlusion fraction == occ_low -> "no" partition
  double occ_high = 0.08; // fraction >= occ_high -> "high" partition
};

// Detection matched against ground truth of one class; `video` indexes the
// corpus so matching never crosses videos.
struct ClassDet {
  double t_s = 0.0, t_e = 0.0, score = 0.0;
  int video = 0;
};
struct ClassGt {
  double t_s = 0.0, t_e = 0.0;
  int video = 0;
};

// Greedy max-tIoU matching (each GT used once, dets visited by descending
// score, tie on earlier start), then area under the precision envelope.
double average_precision(std::vector<ClassDet> dets, const std::vector<ClassGt>& gts,
                         double theta);

struct TaskReport {
  std::map<double, double> map_at_tiou;
  double average_map = 0.0;
  std::map<std::string, double> per_class_ap;  // mean over thresholds
  int classes_evaluated = 0;
};

struct EvalReport {
  std::map<std::string, TaskReport> tasks;  // "verb", "noun", "action"
};

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets_per_video,
                    const std::vector<const AnnotatedVideo*>& videos,
                    const Taxonomy& tax, const EvalConfig& cfg);

// GT universe split by occlusion fraction; detections always compete in full.
struct PartitionReport {
  std::map<std::string, EvalReport> partitions;  // "no", "low", "high"
  std::map<std::string, int> gt_counts;
};

PartitionReport occlusion_partition_report(
    const std::vector<std::vector<Detection>>& dets_per_video,
    const std::vector<const AnnotatedVideo*>& videos, const Taxonomy& tax,
    const EvalConfig& cfg);

// Relative improvement 100 * (mAP_b - mAP_a) / mAP_a per partition and task;
// +inf when the baseline is zero and the comparison is not.
struct ImprovementReport {
  std::map<std::string, std::map<std::string, double>> improvement;  // partition -> task
};

ImprovementReport occlusion_improvement(
    const std::vector<std::vector<Detection>>& dets_a,
    const std::vector<std::vector<Detection>>& dets_b,
    const std::vector<const AnnotatedVideo*>& videos, const Taxonomy& tax,
    const EvalConfig& cfg);

// Trains OWL per (window, seed) against fixed proposals and reports the mean
// and spread of the average action mAP for each window. Window value -1
// denotes full attention over all proposals.
struct AblationRow {
  int window = 0;  // -1 = full
  std::vector<double> per_seed;
  double mean = 0.0;
  double sd = 0.0;
};

std::vector<AblationRow> window_ablation(
    const std::vector<AnnotatedVideo>& corpus, const Taxonomy& tax,
    const std::vector<std::vector<Proposal>>& proposals_per_video,
    const std::vector<int>& windows, const std::vector<uint64_t>& seeds,
    OwlConfig base_cfg, const EvalConfig& eval_cfg);

std::string report_to_json(const EvalReport& report, const std::string& meta_json);
std::string report_to_text(const EvalReport& report);
std::string partition_report_to_json(const PartitionReport& parts,
                                     const ImprovementReport* improvement,
                                     const std::string& meta_json);

}  // namespace owl
