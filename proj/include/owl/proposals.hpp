#pragma once

#include <functional>
#include <string>
#include <vector>

#include "owl/featstore.hpp"
#include "owl/tensor.hpp"

namespace owl {

// Class-agnostic candidate segment in global video seconds.
struct Proposal {
  double t_s = 0.0;
  double t_e = 0.0;
  double score = 0.0;
};

struct WindowPlan {
  int window_size = 0;
  int stride = 0;
  std::vector<std::pair<int, int>> windows;  // [start, end) snippet ranges
};

// Offsets 0, s, 2s, ... while a full window fits; when the tail would be
// left uncovered one extra window is placed at L - w.
WindowPlan plan_windows(int len, int window_size, int stride);

enum class TemModality { visual, audio, audiovisual };

TemModality tem_modality_from_string(const std::string& s);
std::string to_string(TemModality m);

struct TemConfig {
  TemModality modality = TemModality::audiovisual;
  int window = 160;
  int stride = 80;
  int hidden = 32;
  double lr = 0.4;
  int epochs = 40;
  uint64_t seed = 1;
};

// Simplified boundary/actionness scorer: a shared two-layer net applied per
// snippet, emitting start/end/action probabilities through sigmoids.
struct TemModel {
  TemConfig cfg;
  int input_dim = 0;
  Param w1, b1, w2, b2;

  std::vector<Param*> params();
};

TemModel make_tem_model(const TemConfig& cfg, int input_dim, Rng& rng);

// Per-snippet probability (or label) sequences over a snippet range.
struct TemScores {
  std::vector<double> start, end, action;
};

// Snippets as rows; audiovisual mode concatenates the tracks channel-wise.
Tensor2 tem_input_matrix(const AnnotatedVideo& video, TemModality modality, int begin,
                         int end);
int tem_input_dim(const AnnotatedVideo& video, TemModality modality);

// Training labels: action = 1 inside any GT span; start/end = 1 within the
// GT boundary +- max(1 snippet, 0.1 x GT duration).
TemScores tem_targets(const AnnotatedVideo& video, double fps, int begin, int end);

struct TrainCurve {
  std::vector<double> epoch_loss;
};

TrainCurve train_tem(TemModel& model, const std::vector<AnnotatedVideo>& corpus,
                     const TemConfig& cfg);

TemScores tem_forward_scores(const TemModel& model, const AnnotatedVideo& video,
                             int begin, int end);

// Ground-truth-derived scorer: probability 1 exactly at GT boundary snippets
// and inside GT spans, 0 elsewhere.
TemScores oracle_scores(const AnnotatedVideo& video, int begin, int end);

using SnippetScorer =
    std::function<TemScores(const AnnotatedVideo&, int begin, int end)>;

struct ProposalConfig {
  int max_duration = 80;  // snippets; must be <= window size
  double nms_sigma = 0.5;
  double nms_floor = 1e-4;
  int top_n = 100;
};

// Exhaustive in-window candidate enumeration, exposed for tests: score of
// (i, j) is p_start[i] * p_end[j] * mean(p_action[i..j]).
std::vector<Proposal> enumerate_candidates(const TemScores& scores, int window_begin,
                                           double fps, int max_duration);

std::vector<Proposal> generate_proposals(const SnippetScorer& scorer,
                                         const AnnotatedVideo& video,
                                         const WindowPlan& plan,
                                         const ProposalConfig& cfg);
std::vector<Proposal> generate_proposals(const TemModel& model,
                                         const AnnotatedVideo& video,
                                         const WindowPlan& plan,
                                         const ProposalConfig& cfg);

// Gaussian Soft-NMS: repeatedly selects the max-score segment and decays the
// rest by exp(-tIoU^2 / sigma), dropping anything below score_floor. The
// input is not mutated.
std::vector<Proposal> soft_nms(const std::vector<Proposal>& dets, double sigma,
                               double score_floor, int top_n);

struct RecallTable {
  std::vector<int> budgets;
  std::vector<double> tious;
  Tensor2 recall;                     // budgets x tious
  std::vector<double> ar_per_budget;  // mean over tious
  double ar_at_100 = 0.0;
  std::vector<std::string> skipped_videos;  // empty GT, excluded with warning
};

std::vector<double> default_ar_tious();  // 0.5:0.05:0.95
std::vector<int> default_ar_budgets();   // 1, 5, 10, 50, 100

RecallTable average_recall(const std::vector<std::vector<Proposal>>& proposals_per_video,
                           const std::vector<const AnnotatedVideo*>& videos,
                           const std::vector<int>& budgets,
                           const std::vector<double>& tious);

// Proposal interchange JSON: {video_id, proposals:[{t_s,t_e,score}]}.
void write_proposals(const std::string& path, const std::string& video_id,
                     const std::vector<Proposal>& proposals, const std::string& meta_json);
std::pair<std::string, std::vector<Proposal>> read_proposals(const std::string& path);

}  // namespace owl
