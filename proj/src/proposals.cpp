#include "owl/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "owl/evaltal.hpp"

namespace owl {

using nlohmann::json;

WindowPlan plan_windows(int len, int window_size, int stride) {
  if (window_size <= 0 || stride <= 0 || stride > window_size)
    fail(ErrorKind::plan, "plan_windows: need 1 <= stride <= window, got w=" +
                              std::to_string(window_size) + " s=" + std::to_string(stride));
  if (len < 1) fail(ErrorKind::plan, "plan_windows: empty track");
  WindowPlan plan;
  plan.window_size = window_size;
  plan.stride = stride;
  if (len <= window_size) {
    plan.windows.push_back({0, len});
    return plan;
  }
  for (int start = 0; start + window_size <= len; start += stride)
    plan.windows.push_back({start, start + window_size});
  if (plan.windows.back().second < len)
    plan.windows.push_back({len - window_size, len});
  return plan;
}

TemModality tem_modality_from_string(const std::string& s) {
  if (s == "v" || s == "visual") return TemModality::visual;
  if (s == "a" || s == "audio") return TemModality::audio;
  if (s == "av" || s == "audiovisual") return TemModality::audiovisual;
  fail(ErrorKind::config, "unknown modality '" + s + "' (expected v|a|av)");
}

std::string to_string(TemModality m) {
  switch (m) {
    case TemModality::visual: return "v";
    case TemModality::audio: return "a";
    case TemModality::audiovisual: return "av";
  }
  return "?";
}

std::vector<Param*> TemModel::params() { return {&w1, &b1, &w2, &b2}; }

namespace {

Tensor2 xavier(Rng& rng, int rows, int cols) {
  Tensor2 t(rows, cols);
  double bound = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

TemModel make_tem_model(const TemConfig& cfg, int input_dim, Rng& rng) {
  if (input_dim < 1) fail(ErrorKind::config, "tem: input_dim must be >= 1");
  if (cfg.hidden < 1) fail(ErrorKind::config, "tem: hidden must be >= 1");
  TemModel m;
  m.cfg = cfg;
  m.input_dim = input_dim;
  m.w1 = Param("tem.w1", xavier(rng, input_dim, cfg.hidden));
  m.b1 = Param("tem.b1", Tensor2(1, cfg.hidden));
  m.w2 = Param("tem.w2", xavier(rng, cfg.hidden, 3));
  m.b2 = Param("tem.b2", Tensor2(1, 3));
  return m;
}

int tem_input_dim(const AnnotatedVideo& video, TemModality modality) {
  switch (modality) {
    case TemModality::visual: return video.visual.dim;
    case TemModality::audio: return video.audio.dim;
    case TemModality::audiovisual: return video.visual.dim + video.audio.dim;
  }
  return 0;
}

Tensor2 tem_input_matrix(const AnnotatedVideo& video, TemModality modality, int begin,
                         int end) {
  if (begin < 0 || end > video.visual.len || begin >= end)
    fail(ErrorKind::plan, "tem_input_matrix: bad snippet range");
  int n = end - begin;
  int dv = video.visual.dim, da = video.audio.dim;
  auto copy_track = [&](Tensor2& x, const FeatureTrack& track, int col_off) {
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < track.dim; ++d)
        x.at(i, col_off + d) = track.data.at(d, begin + i);
  };
  if (modality == TemModality::visual) {
    Tensor2 x(n, dv);
    copy_track(x, video.visual, 0);
    return x;
  }
  if (modality == TemModality::audio) {
    Tensor2 x(n, da);
    copy_track(x, video.audio, 0);
    return x;
  }
  if (video.visual.len != video.audio.len)
    fail(ErrorKind::data, "tem_input_matrix: track length mismatch");
  Tensor2 x(n, dv + da);
  copy_track(x, video.visual, 0);
  copy_track(x, video.audio, dv);
  return x;
}

TemScores tem_targets(const AnnotatedVideo& video, double fps, int begin, int end) {
  int n = end - begin;
  TemScores t;
  t.start.assign(n, 0.0);
  t.end.assign(n, 0.0);
  t.action.assign(n, 0.0);
  for (const GtSegment& seg : video.segments) {
    // Tolerance keeps snippets exactly on the radius inside the region
    // despite rounding in time = i / fps.
    double radius = std::max(1.0 / fps, 0.1 * (seg.t_e - seg.t_s)) + 1e-9;
    for (int k = 0; k < n; ++k) {
      double time = (begin + k) / fps;
      if (time >= seg.t_s - 1e-9 && time <= seg.t_e + 1e-9) t.action[k] = 1.0;
      if (std::fabs(time - seg.t_s) <= radius) t.start[k] = 1.0;
      if (std::fabs(time - seg.t_e) <= radius) t.end[k] = 1.0;
    }
  }
  return t;
}

namespace {

struct TemExample {
  int video = 0;
  std::pair<int, int> window;
};

Tape::NodeId tem_logits(Tape& tape, TemModel& model, const Tensor2& x) {
  auto xin = tape.input(x);
  auto h = tape.relu(tape.linear(xin, tape.param(model.w1), tape.param(model.b1)));
  return tape.linear(h, tape.param(model.w2), tape.param(model.b2));
}

Tensor2 targets_matrix(const TemScores& t) {
  int n = static_cast<int>(t.start.size());
  Tensor2 y(n, 3);
  for (int i = 0; i < n; ++i) {
    y.at(i, 0) = t.start[i];
    y.at(i, 1) = t.end[i];
    y.at(i, 2) = t.action[i];
  }
  return y;
}

}  // namespace

TrainCurve train_tem(TemModel& model, const std::vector<AnnotatedVideo>& corpus,
                     const TemConfig& cfg) {
  if (corpus.empty()) fail(ErrorKind::data, "train_tem: empty corpus");
  if (!(cfg.lr > 0.0)) fail(ErrorKind::config, "train_tem: lr must be > 0");
  if (cfg.epochs < 1) fail(ErrorKind::config, "train_tem: epochs must be >= 1");
  for (const AnnotatedVideo& v : corpus)
    if (tem_input_dim(v, cfg.modality) != model.input_dim)
      fail(ErrorKind::dimension, "train_tem: video " + v.video_id +
                                     " input dim does not match model");

  std::vector<TemExample> examples;
  for (size_t vi = 0; vi < corpus.size(); ++vi) {
    WindowPlan plan = plan_windows(corpus[vi].visual.len, cfg.window, cfg.stride);
    for (const auto& w : plan.windows)
      examples.push_back({static_cast<int>(vi), w});
  }

  auto params = model.params();
  Rng rng(Rng::mix(cfg.seed, 0x7e310000));
  TrainCurve curve;
  std::vector<int> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    double total = 0.0;
    for (int idx : order) {
      const TemExample& ex = examples[idx];
      const AnnotatedVideo& video = corpus[ex.video];
      Tensor2 x = tem_input_matrix(video, cfg.modality, ex.window.first, ex.window.second);
      TemScores t = tem_targets(video, video.visual.fps, ex.window.first, ex.window.second);
      Tape tape;
      auto loss = tape.bce_with_logits(tem_logits(tape, model, x), targets_matrix(t));
      double lv = tape.value(loss).at(0, 0);
      if (!std::isfinite(lv)) fail(ErrorKind::numeric, "train_tem: non-finite loss");
      total += lv;
      tape.backward(loss);
      sgd_step(params, cfg.lr);
      zero_grads(params);
    }
    curve.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return curve;
}

TemScores tem_forward_scores(const TemModel& model, const AnnotatedVideo& video,
                             int begin, int end) {
  Tensor2 x = tem_input_matrix(video, model.cfg.modality, begin, end);
  Tape tape;
  TemModel& m = const_cast<TemModel&>(model);
  auto probs = tape.sigmoid(tem_logits(tape, m, x));
  const Tensor2& p = tape.value(probs);
  TemScores s;
  int n = end - begin;
  s.start.resize(n);
  s.end.resize(n);
  s.action.resize(n);
  for (int i = 0; i < n; ++i) {
    s.start[i] = p.at(i, 0);
    s.end[i] = p.at(i, 1);
    s.action[i] = p.at(i, 2);
  }
  return s;
}

TemScores oracle_scores(const AnnotatedVideo& video, int begin, int end) {
  double fps = video.visual.fps;
  int n = end - begin;
  TemScores s;
  s.start.assign(n, 0.0);
  s.end.assign(n, 0.0);
  s.action.assign(n, 0.0);
  for (const GtSegment& seg : video.segments) {
    long long is = snippet_index(seg.t_s, fps);
    long long ie = snippet_index(seg.t_e, fps);
    for (int k = 0; k < n; ++k) {
      long long i = begin + k;
      double time = i / fps;
      if (i == is) s.start[k] = 1.0;
      if (i == ie) s.end[k] = 1.0;
      if (time >= seg.t_s && time <= seg.t_e) s.action[k] = 1.0;
    }
  }
  return s;
}

std::vector<Proposal> enumerate_candidates(const TemScores& scores, int window_begin,
                                           double fps, int max_duration) {
  int n = static_cast<int>(scores.action.size());
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + scores.action[i];
  std::vector<Proposal> out;
  for (int i = 0; i < n; ++i) {
    int j_hi = std::min(n - 1, i + max_duration);
    for (int j = i + 1; j <= j_hi; ++j) {
      double mean_action = (prefix[j + 1] - prefix[i]) / (j - i + 1);
      double score = scores.start[i] * scores.end[j] * mean_action;
      out.push_back({(window_begin + i) / fps, (window_begin + j) / fps, score});
    }
  }
  return out;
}

std::vector<Proposal> generate_proposals(const SnippetScorer& scorer,
                                         const AnnotatedVideo& video,
                                         const WindowPlan& plan,
                                         const ProposalConfig& cfg) {
  if (cfg.max_duration < 1 || cfg.max_duration > plan.window_size)
    fail(ErrorKind::config, "generate_proposals: max_duration must be in [1, window]");
  double fps = video.visual.fps;
  // Exact-span dedup across windows, keeping the max score.
  std::unordered_map<uint64_t, Proposal> best;
  for (const auto& [a, b] : plan.windows) {
    TemScores scores = scorer(video, a, b);
    for (const Proposal& c : enumerate_candidates(scores, a, fps, cfg.max_duration)) {
      if (!std::isfinite(c.score))
        fail(ErrorKind::numeric, "generate_proposals: non-finite candidate score");
      uint64_t gi = static_cast<uint64_t>(std::llround(c.t_s * fps));
      uint64_t gj = static_cast<uint64_t>(std::llround(c.t_e * fps));
      uint64_t key = (gi << 32) | gj;
      auto it = best.find(key);
      if (it == best.end() || c.score > it->second.score) best[key] = c;
    }
  }
  std::vector<Proposal> cands;
  cands.reserve(best.size());
  for (auto& [k, p] : best) cands.push_back(p);
  std::sort(cands.begin(), cands.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.t_s != b.t_s) return a.t_s < b.t_s;
    return a.t_e < b.t_e;
  });
  return soft_nms(cands, cfg.nms_sigma, cfg.nms_floor, cfg.top_n);
}

std::vector<Proposal> generate_proposals(const TemModel& model,
                                         const AnnotatedVideo& video,
                                         const WindowPlan& plan,
                                         const ProposalConfig& cfg) {
  return generate_proposals(
      [&model](const AnnotatedVideo& v, int a, int b) {
        return tem_forward_scores(model, v, a, b);
      },
      video, plan, cfg);
}

std::vector<Proposal> soft_nms(const std::vector<Proposal>& dets, double sigma,
                               double score_floor, int top_n) {
  if (!(sigma > 0.0)) fail(ErrorKind::config, "soft_nms: sigma must be > 0");
  if (score_floor < 0.0) fail(ErrorKind::config, "soft_nms: negative score floor");
  for (const Proposal& p : dets)
    if (p.score < -1e-12 || p.score > 1.0 + 1e-12)
      fail(ErrorKind::config, "soft_nms: scores must lie in [0,1]");
  std::vector<Proposal> work;
  work.reserve(dets.size());
  for (const Proposal& p : dets)
    if (p.score >= score_floor) work.push_back(p);
  std::vector<Proposal> selected;
  while (!work.empty() && static_cast<int>(selected.size()) < top_n) {
    size_t pick = 0;
    for (size_t k = 1; k < work.size(); ++k) {
      const Proposal &a = work[k], &b = work[pick];
      if (a.score > b.score ||
          (a.score == b.score &&
           (a.t_s < b.t_s || (a.t_s == b.t_s && a.t_e < b.t_e))))
        pick = k;
    }
    Proposal sel = work[pick];
    work.erase(work.begin() + static_cast<std::ptrdiff_t>(pick));
    selected.push_back(sel);
    std::vector<Proposal> kept;
    kept.reserve(work.size());
    for (const Proposal& r : work) {
      double ov = tiou(sel.t_s, sel.t_e, r.t_s, r.t_e);
      Proposal d = r;
      d.score *= std::exp(-(ov * ov) / sigma);
      if (d.score >= score_floor) kept.push_back(d);
    }
    work = std::move(kept);
  }
  return selected;
}

std::vector<double> default_ar_tious() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(0.5 + 0.05 * k);
  return t;
}

std::vector<int> default_ar_budgets() { return {1, 5, 10, 50, 100}; }

RecallTable average_recall(const std::vector<std::vector<Proposal>>& proposals_per_video,
                           const std::vector<const AnnotatedVideo*>& videos,
                           const std::vector<int>& budgets,
                           const std::vector<double>& tious) {
  if (proposals_per_video.size() != videos.size())
    fail(ErrorKind::join, "average_recall: proposal/video list size mismatch");
  if (budgets.empty() || tious.empty())
    fail(ErrorKind::config, "average_recall: empty budgets or tious");

  // For each video and threshold, the 1-based rank at which each GT instance
  // is first matched by the score-ordered proposal list (0 = never). Greedy
  // matching over the prefix of the sorted list is rank-consistent, so one
  // pass per threshold covers every budget.
  RecallTable table;
  table.budgets = budgets;
  table.tious = tious;
  std::vector<int> eval_budgets = budgets;
  if (std::find(eval_budgets.begin(), eval_budgets.end(), 100) == eval_budgets.end())
    eval_budgets.push_back(100);

  long long total_gt = 0;
  // matched_at[t] accumulates, per threshold, counts of GT matched by rank <= AN.
  std::vector<std::vector<long long>> matched(tious.size(),
                                              std::vector<long long>(eval_budgets.size(), 0));

  for (size_t vi = 0; vi < videos.size(); ++vi) {
    const AnnotatedVideo& video = *videos[vi];
    if (video.segments.empty()) {
      table.skipped_videos.push_back(video.video_id);
      continue;
    }
    total_gt += static_cast<long long>(video.segments.size());
    std::vector<Proposal> props = proposals_per_video[vi];
    std::sort(props.begin(), props.end(), [](const Proposal& a, const Proposal& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.t_s != b.t_s) return a.t_s < b.t_s;
      return a.t_e < b.t_e;
    });
    for (size_t ti = 0; ti < tious.size(); ++ti) {
      double theta = tious[ti];
      std::vector<int> rank(video.segments.size(), 0);
      std::vector<bool> taken(video.segments.size(), false);
      for (size_t pi = 0; pi < props.size(); ++pi) {
        int best_gt = -1;
        double best_ov = -1.0;
        for (size_t gi = 0; gi < video.segments.size(); ++gi) {
          if (taken[gi]) continue;
          double ov = tiou(props[pi].t_s, props[pi].t_e, video.segments[gi].t_s,
                           video.segments[gi].t_e);
          if (ov > best_ov ||
              (ov == best_ov && best_gt >= 0 &&
               video.segments[gi].t_s < video.segments[best_gt].t_s)) {
            best_ov = ov;
            best_gt = static_cast<int>(gi);
          }
        }
        if (best_gt >= 0 && best_ov >= theta) {
          taken[best_gt] = true;
          rank[best_gt] = static_cast<int>(pi) + 1;
        }
      }
      for (size_t gi = 0; gi < rank.size(); ++gi) {
        if (rank[gi] == 0) continue;
        for (size_t bi = 0; bi < eval_budgets.size(); ++bi)
          if (rank[gi] <= eval_budgets[bi]) ++matched[ti][bi];
      }
    }
  }
  if (total_gt == 0)
    fail(ErrorKind::data, "average_recall: no videos with ground truth");

  table.recall = Tensor2(static_cast<int>(budgets.size()), static_cast<int>(tious.size()));
  table.ar_per_budget.assign(budgets.size(), 0.0);
  for (size_t bi = 0; bi < budgets.size(); ++bi) {
    double sum = 0.0;
    for (size_t ti = 0; ti < tious.size(); ++ti) {
      double r = static_cast<double>(matched[ti][bi]) / static_cast<double>(total_gt);
      table.recall.at(static_cast<int>(bi), static_cast<int>(ti)) = r;
      sum += r;
    }
    table.ar_per_budget[bi] = sum / static_cast<double>(tious.size());
  }
  size_t b100 = 0;
  for (size_t bi = 0; bi < eval_budgets.size(); ++bi)
    if (eval_budgets[bi] == 100) b100 = bi;
  double sum100 = 0.0;
  for (size_t ti = 0; ti < tious.size(); ++ti)
    sum100 += static_cast<double>(matched[ti][b100]) / static_cast<double>(total_gt);
  table.ar_at_100 = sum100 / static_cast<double>(tious.size());
  return table;
}

void write_proposals(const std::string& path, const std::string& video_id,
                     const std::vector<Proposal>& proposals, const std::string& meta_json) {
  json plist = json::array();
  for (const Proposal& p : proposals)
    plist.push_back({{"t_s", p.t_s}, {"t_e", p.t_e}, {"score", p.score}});
  json j = {{"video_id", video_id}, {"proposals", plist}};
  if (!meta_json.empty()) j["meta"] = json::parse(meta_json);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << j.dump(2) << "\n";
}

std::pair<std::string, std::vector<Proposal>> read_proposals(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::dependency, "missing proposals file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::parse, "invalid JSON in " + path);
  std::vector<Proposal> props;
  std::string video_id;
  try {
    video_id = j.at("video_id").get<std::string>();
    for (const auto& p : j.at("proposals")) {
      Proposal pr{p.at("t_s").get<double>(), p.at("t_e").get<double>(),
                  p.at("score").get<double>()};
      if (!(pr.t_s < pr.t_e))
        fail(ErrorKind::segment, path + ": proposal with t_s >= t_e");
      if (pr.score < 0.0 || pr.score > 1.0)
        fail(ErrorKind::parse, path + ": proposal score outside [0,1]");
      props.push_back(pr);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "bad proposals in " + path + ": " + e.what());
  }
  return {video_id, props};
}

}  // namespace owl
