#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "owl/evaltal.hpp"
#include "owl/proposals.hpp"

using namespace owl;

namespace {

AnnotatedVideo make_video(double duration, double fps,
                          std::vector<std::pair<double, double>> spans, int dim,
                          uint64_t seed) {
  AnnotatedVideo v;
  v.video_id = "test";
  int len = static_cast<int>(std::ceil(duration * fps));
  v.duration = len / fps;
  Rng rng(seed);
  for (auto [a, b] : spans) v.segments.push_back({a, b, 0, 0, 0.0});
  for (FeatureTrack* t : {&v.visual, &v.audio}) {
    t->dim = dim;
    t->len = len;
    t->fps = fps;
    t->data = Tensor2(dim, len);
    for (double& x : t->data.data) x = 0.1 * rng.normal();
  }
  v.visual.modality = Modality::visual;
  v.audio.modality = Modality::audio;
  return v;
}

}  // namespace

TEST_CASE("plan_windows") {
  WindowPlan p = plan_windows(512, 256, 128);
  REQUIRE(p.windows.size() == 3);
  CHECK(p.windows[0] == std::pair<int, int>{0, 256});
  CHECK(p.windows[1] == std::pair<int, int>{128, 384});
  CHECK(p.windows[2] == std::pair<int, int>{256, 512});

  WindowPlan small = plan_windows(100, 256, 128);
  REQUIRE(small.windows.size() == 1);
  CHECK(small.windows[0] == std::pair<int, int>{0, 100});

  WindowPlan exact = plan_windows(256, 256, 128);
  REQUIRE(exact.windows.size() == 1);
  CHECK(exact.windows[0] == std::pair<int, int>{0, 256});

  CHECK_THROWS_AS(plan_windows(100, 0, 1), Error);
  CHECK_THROWS_AS(plan_windows(100, 16, 32), Error);
  CHECK_THROWS_AS(plan_windows(0, 16, 8), Error);

  // tail gets covered by an extra clipped-offset window
  WindowPlan tail = plan_windows(500, 256, 128);
  REQUIRE(tail.windows.size() == 3);
  CHECK(tail.windows[2] == std::pair<int, int>{244, 500});
}

TEST_CASE("window plans cover every snippet") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    int w = rng.uniform_int(4, 300);
    int s = rng.uniform_int(1, w);
    int len = rng.uniform_int(1, 900);
    WindowPlan p = plan_windows(len, w, s);
    std::vector<bool> covered(len, false);
    for (auto [a, b] : p.windows) {
      REQUIRE(a >= 0);
      REQUIRE(b <= len);
      REQUIRE(a < b);
      for (int i = a; i < b; ++i) covered[i] = true;
    }
    for (int i = 0; i < len; ++i) REQUIRE(covered[i]);
  }
}

TEST_CASE("any instance shorter than the window fits inside one window") {
  // With stride <= w/2, every span of at most (w-1) snippets is fully inside
  // at least one planned window.
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    int w = rng.uniform_int(8, 200);
    int s = std::max(1, w / 2);
    int len = rng.uniform_int(w + 1, 1200);
    WindowPlan p = plan_windows(len, w, s);
    for (int probe = 0; probe < 20; ++probe) {
      int dur = rng.uniform_int(1, w - 1);
      int start = rng.uniform_int(0, len - dur - 1);
      bool contained = false;
      for (auto [a, b] : p.windows)
        if (a <= start && start + dur < b) contained = true;
      REQUIRE(contained);
    }
  }
}

TEST_CASE("tem targets") {
  AnnotatedVideo v = make_video(10.0, 5.0, {{2.0, 4.0}}, 2, 1);
  TemScores t = tem_targets(v, 5.0, 0, v.visual.len);
  // action = 1 exactly on snippets with time in [2, 4]
  for (int i = 0; i < v.visual.len; ++i) {
    double time = i / 5.0;
    CHECK(t.action[i] == ((time >= 2.0 && time <= 4.0) ? 1.0 : 0.0));
  }
  // boundary radius = max(1 snippet, 0.1 * dur) = max(0.2, 0.2) = 0.2 s
  CHECK(t.start[9] == 1.0);   // 1.8 s
  CHECK(t.start[10] == 1.0);  // 2.0 s
  CHECK(t.start[11] == 1.0);  // 2.2 s
  CHECK(t.start[12] == 0.0);
  CHECK(t.end[19] == 1.0);
  CHECK(t.end[20] == 1.0);
  CHECK(t.end[21] == 1.0);
  CHECK(t.end[22] == 0.0);
}

TEST_CASE("train_tem saturates p_action when every snippet is inside a span") {
  std::vector<AnnotatedVideo> corpus;
  corpus.push_back(make_video(8.0, 5.0, {{0.0, 8.0}}, 4, 2));
  corpus.push_back(make_video(6.0, 5.0, {{0.0, 6.0}}, 4, 3));
  TemConfig cfg;
  cfg.modality = TemModality::audiovisual;
  cfg.window = 40;
  cfg.stride = 20;
  cfg.hidden = 8;
  cfg.lr = 1.0;
  cfg.epochs = 120;
  cfg.seed = 5;
  Rng rng(5);
  TemModel model = make_tem_model(cfg, tem_input_dim(corpus[0], cfg.modality), rng);
  train_tem(model, corpus, cfg);
  double bce = 0.0;
  int count = 0;
  for (const AnnotatedVideo& v : corpus) {
    TemScores s = tem_forward_scores(model, v, 0, v.visual.len);
    for (double p : s.action) {
      bce += -std::log(p);
      ++count;
    }
  }
  CHECK(bce / count < 0.05);

  CHECK_THROWS_AS(train_tem(model, {}, cfg), Error);
}

TEST_CASE("tem loss gradient passes grad_check") {
  AnnotatedVideo v = make_video(6.0, 5.0, {{1.0, 3.0}}, 3, 7);
  TemConfig cfg;
  cfg.hidden = 6;
  Rng rng(7);
  TemModel model = make_tem_model(cfg, tem_input_dim(v, cfg.modality), rng);
  Tensor2 x = tem_input_matrix(v, cfg.modality, 0, v.visual.len);
  TemScores t = tem_targets(v, 5.0, 0, v.visual.len);
  Tensor2 targets(v.visual.len, 3);
  for (int i = 0; i < v.visual.len; ++i) {
    targets.at(i, 0) = t.start[i];
    targets.at(i, 1) = t.end[i];
    targets.at(i, 2) = t.action[i];
  }
  auto loss_fn = [&]() {
    Tape tape;
    auto h = tape.relu(tape.linear(tape.input(x), tape.param(model.w1), tape.param(model.b1)));
    auto logits = tape.linear(h, tape.param(model.w2), tape.param(model.b2));
    auto loss = tape.bce_with_logits(logits, targets);
    tape.backward(loss);
    return tape.value(loss).at(0, 0);
  };
  auto params = model.params();
  CHECK(grad_check(loss_fn, params, 1e-5) < 1e-5);
}

TEST_CASE("audiovisual input beats visual-only on an audio-class corpus") {
  SynthSpec spec;
  spec.videos = 6;
  spec.visual_classes = 0;
  spec.audio_classes = 3;
  spec.context_groups = 0;
  spec.instances_per_video = 5;
  spec.feature_dim = 8;
  spec.noise_sigma = 0.2;
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    SynthCorpus corpus = generate_synthetic(spec, seed);
    auto run = [&](TemModality m) {
      TemConfig cfg;
      cfg.modality = m;
      cfg.window = 80;
      cfg.stride = 40;
      cfg.hidden = 12;
      cfg.lr = 0.4;
      cfg.epochs = 25;
      cfg.seed = seed;
      Rng rng(seed);
      TemModel model = make_tem_model(cfg, tem_input_dim(corpus.videos[0], m), rng);
      return train_tem(model, corpus.videos, cfg).epoch_loss.back();
    };
    double loss_v = run(TemModality::visual);
    double loss_av = run(TemModality::audiovisual);
    INFO("seed " << seed << " v " << loss_v << " av " << loss_av);
    CHECK(loss_av < loss_v);
  }
}

TEST_CASE("uniform scorer gives every candidate score 0.125") {
  TemScores s;
  s.start.assign(20, 0.5);
  s.end.assign(20, 0.5);
  s.action.assign(20, 0.5);
  auto cands = enumerate_candidates(s, 0, 5.0, 8);
  REQUIRE(!cands.empty());
  for (const Proposal& c : cands) CHECK(c.score == 0.125);
  // all (i, j) pairs with i < j and j - i <= max_duration
  int expected = 0;
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j <= std::min(19, i + 8); ++j) ++expected;
  CHECK(static_cast<int>(cands.size()) == expected);
}

TEST_CASE("oracle scorer recovers planted instances precisely") {
  SynthSpec spec;
  spec.videos = 4;
  spec.visual_classes = 2;
  spec.audio_classes = 0;
  spec.instances_per_video = 5;
  spec.feature_dim = 4;
  spec.noise_sigma = 0.0;
  spec.fps = 10.0;
  spec.dur_min = 3.0;
  spec.dur_max = 4.0;
  spec.gap_min = 0.8;
  spec.gap_max = 1.5;
  SynthCorpus corpus = generate_synthetic(spec, 77);
  ProposalConfig pcfg;
  pcfg.max_duration = 80;
  for (const AnnotatedVideo& v : corpus.videos) {
    WindowPlan plan = plan_windows(v.visual.len, 160, 80);
    auto props = generate_proposals(oracle_scores, v, plan, pcfg);
    for (const GtSegment& g : v.segments) {
      double best = 0.0;
      for (const Proposal& p : props) best = std::max(best, tiou(p.t_s, p.t_e, g.t_s, g.t_e));
      CHECK(best >= 0.9);
    }
    for (const Proposal& p : props) {
      CHECK(p.t_s >= 0.0);
      CHECK(p.t_e <= v.duration + 1e-12);
      CHECK(p.t_s < p.t_e);
      CHECK(p.score >= 0.0);
      CHECK(p.score <= 1.0);
    }
    // determinism
    auto again = generate_proposals(oracle_scores, v, plan, pcfg);
    REQUIRE(props.size() == again.size());
    for (size_t i = 0; i < props.size(); ++i) {
      CHECK(props[i].t_s == again[i].t_s);
      CHECK(props[i].score == again[i].score);
    }
  }
}

TEST_CASE("an instance straddling two windows is recovered by the overlap") {
  AnnotatedVideo v = make_video(20.0, 10.0, {{15.5, 16.5}}, 2, 9);
  // windows [0,160) and [40,200): the instance spans snippets 155..165
  WindowPlan plan = plan_windows(v.visual.len, 160, 80);
  REQUIRE(plan.windows.size() == 2);
  ProposalConfig pcfg;
  pcfg.max_duration = 80;
  auto props = generate_proposals(oracle_scores, v, plan, pcfg);
  REQUIRE(!props.empty());
  double best = 0.0;
  for (const Proposal& p : props)
    best = std::max(best, tiou(p.t_s, p.t_e, 15.5, 16.5));
  CHECK(best >= 0.9);
}

TEST_CASE("soft_nms closed forms") {
  // disjoint segments: scores unchanged
  std::vector<Proposal> disjoint = {{0.0, 1.0, 0.9}, {2.0, 3.0, 0.7}};
  auto out = soft_nms(disjoint, 0.5, 1e-4, 10);
  REQUIRE(out.size() == 2);
  CHECK(out[0].score == 0.9);
  CHECK(out[1].score == 0.7);

  // identical duplicates: second decays by exp(-1/sigma)
  std::vector<Proposal> dup = {{0.0, 1.0, 0.9}, {0.0, 1.0, 0.8}};
  auto out2 = soft_nms(dup, 0.5, 1e-4, 10);
  REQUIRE(out2.size() == 2);
  CHECK(out2[0].score == 0.9);
  CHECK(out2[1].score == doctest::Approx(0.8 * std::exp(-2.0)).epsilon(1e-12));

  // input is not mutated
  CHECK(dup[1].score == 0.8);

  CHECK_THROWS_AS(soft_nms(dup, 0.0, 1e-4, 10), Error);
  CHECK_THROWS_AS(soft_nms(dup, -1.0, 1e-4, 10), Error);
  std::vector<Proposal> bad = {{0.0, 1.0, 1.5}};
  CHECK_THROWS_AS(soft_nms(bad, 0.5, 1e-4, 10), Error);
}

TEST_CASE("soft_nms never increases scores") {
  Rng rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Proposal> dets;
    int n = rng.uniform_int(1, 25);
    for (int i = 0; i < n; ++i) {
      double a = rng.uniform(0.0, 18.0);
      double d = rng.uniform(0.3, 4.0);
      dets.push_back({a, a + d, rng.uniform(0.0, 1.0)});
    }
    auto out = soft_nms(dets, 0.4, 1e-4, 100);
    for (const Proposal& o : out) {
      double orig = -1.0;
      for (const Proposal& in : dets)
        if (in.t_s == o.t_s && in.t_e == o.t_e) orig = std::max(orig, in.score);
      REQUIRE(orig >= 0.0);
      REQUIRE(o.score <= orig + 1e-15);
    }
  }
}

TEST_CASE("soft_nms at sigma -> 0 behaves like hard NMS") {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    int n = rng.uniform_int(2, 20);
    std::vector<Proposal> dets;
    std::vector<oracles::Seg> segs;
    for (int i = 0; i < n; ++i) {
      double a = 0.5 * rng.uniform_int(0, 30);
      double d = 0.5 * rng.uniform_int(1, 6);
      double s = rng.uniform(0.05, 1.0);
      dets.push_back({a, a + d, s});
      segs.push_back({a, a + d, s});
    }
    auto soft = soft_nms(dets, 1e-6, 1e-4, 8);
    auto hard = oracles::hard_nms(segs, 8);
    REQUIRE(soft.size() == hard.size());
    for (size_t i = 0; i < soft.size(); ++i) {
      CHECK(soft[i].t_s == hard[i].t_s);
      CHECK(soft[i].t_e == hard[i].t_e);
    }
  }
}

TEST_CASE("average recall basics") {
  AnnotatedVideo v = make_video(12.0, 5.0, {{1.0, 3.0}, {5.0, 8.0}}, 2, 3);
  std::vector<const AnnotatedVideo*> videos = {&v};

  // proposals identical to GT: AR = 1 at every budget >= |GT|
  std::vector<std::vector<Proposal>> exact = {{{1.0, 3.0, 0.9}, {5.0, 8.0, 0.8}}};
  RecallTable t = average_recall(exact, videos, {2, 5, 100}, default_ar_tious());
  for (double ar : t.ar_per_budget) CHECK(ar == 1.0);
  CHECK(t.ar_at_100 == 1.0);

  // zero proposals: AR = 0
  std::vector<std::vector<Proposal>> none = {{}};
  RecallTable z = average_recall(none, videos, {1, 100}, default_ar_tious());
  CHECK(z.ar_at_100 == 0.0);
}

TEST_CASE("average recall matches the hand-computed two-proposal case") {
  AnnotatedVideo v = make_video(10.0, 5.0, {{0.0, 10.0}}, 2, 4);
  std::vector<const AnnotatedVideo*> videos = {&v};

  std::vector<std::vector<Proposal>> props = {{{0.0, 10.0, 0.9}, {0.0, 5.0, 0.8}}};
  RecallTable t = average_recall(props, videos, {1}, default_ar_tious());
  // top-1 is [0,10]: matched at every threshold
  CHECK(t.ar_per_budget[0] == 1.0);

  std::vector<std::vector<Proposal>> swapped = {{{0.0, 10.0, 0.8}, {0.0, 5.0, 0.9}}};
  RecallTable s = average_recall(swapped, videos, {1}, default_ar_tious());
  // top-1 is [0,5] with tIoU exactly 0.5: matches only the 0.5 threshold
  CHECK(s.recall.at(0, 0) == 1.0);
  for (int ti = 1; ti < s.recall.cols; ++ti) CHECK(s.recall.at(0, ti) == 0.0);
  CHECK(s.ar_per_budget[0] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("average recall is monotone in budget and antitone in threshold") {
  Rng rng(41);
  AnnotatedVideo v = make_video(30.0, 5.0, {{1, 3}, {5, 9}, {11, 12}, {14, 20}, {22, 25}},
                                2, 8);
  std::vector<const AnnotatedVideo*> videos = {&v};
  std::vector<Proposal> props;
  for (int i = 0; i < 60; ++i) {
    double a = rng.uniform(0.0, 28.0);
    double d = rng.uniform(0.4, 6.0);
    props.push_back({a, std::min(30.0, a + d), rng.uniform(0.0, 1.0)});
  }
  std::vector<std::vector<Proposal>> per_video = {props};
  RecallTable t = average_recall(per_video, videos, {1, 5, 10, 50, 100}, default_ar_tious());
  for (int b = 1; b < t.recall.rows; ++b)
    for (int ti = 0; ti < t.recall.cols; ++ti)
      CHECK(t.recall.at(b, ti) >= t.recall.at(b - 1, ti));
  for (int b = 0; b < t.recall.rows; ++b)
    for (int ti = 1; ti < t.recall.cols; ++ti)
      CHECK(t.recall.at(b, ti) <= t.recall.at(b, ti - 1));
}

TEST_CASE("average recall excludes videos without ground truth") {
  AnnotatedVideo with_gt = make_video(10.0, 5.0, {{1.0, 3.0}}, 2, 5);
  AnnotatedVideo empty = make_video(10.0, 5.0, {}, 2, 6);
  std::vector<const AnnotatedVideo*> videos = {&with_gt, &empty};
  std::vector<std::vector<Proposal>> props = {{{1.0, 3.0, 0.9}}, {{2.0, 4.0, 0.5}}};
  RecallTable t = average_recall(props, videos, {1}, default_ar_tious());
  REQUIRE(t.skipped_videos.size() == 1);
  CHECK(t.skipped_videos[0] == "test");
  CHECK(t.ar_per_budget[0] == 1.0);

  std::vector<const AnnotatedVideo*> only_empty = {&empty};
  std::vector<std::vector<Proposal>> p2 = {{}};
  CHECK_THROWS_AS(average_recall(p2, only_empty, {1}, default_ar_tious()), Error);
}

TEST_CASE("proposal json round trip") {
  auto dir = std::filesystem::temp_directory_path() / "owl_prop_json";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "p.json").string();
  std::vector<Proposal> props = {{0.5, 2.5, 0.75}, {3.0, 4.0, 0.5}};
  write_proposals(path, "vid_7", props, R"({"tool_version":"0.1.0","seed":3})");
  auto [id, r] = read_proposals(path);
  CHECK(id == "vid_7");
  REQUIRE(r.size() == 2);
  CHECK(r[0].t_s == 0.5);
  CHECK(r[0].score == 0.75);
}
