#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "owl/featstore.hpp"

using namespace owl;
namespace fs = std::filesystem;

namespace {

FeatureTrack make_track(std::vector<double> values, double fps) {
  FeatureTrack t;
  t.modality = Modality::visual;
  t.dim = 1;
  t.len = static_cast<int>(values.size());
  t.fps = fps;
  t.data = Tensor2(1, t.len);
  for (int i = 0; i < t.len; ++i) t.data.at(0, i) = values[i];
  return t;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("owl_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("pool_proposal_features") {
  FeatureTrack t = make_track({1, 5, 2, 9}, 1.0);

  // constant track: any span pools to the constant
  FeatureTrack c = make_track({3, 3, 3, 3}, 1.0);
  CHECK(pool_proposal_features(c, 0.2, 3.7)[0] == 3.0);
  CHECK(pool_proposal_features(c, 1.0, 2.0)[0] == 3.0);

  // round(0.6)=1, round(2.4)=2 -> max(5, 2) = 5
  CHECK(pool_proposal_features(t, 0.6, 2.4)[0] == 5.0);

  // span inside one snippet: round(1.1)=round(1.3)=1 -> 5
  CHECK(pool_proposal_features(t, 1.1, 1.3)[0] == 5.0);

  CHECK_THROWS_AS(pool_proposal_features(t, 2.0, 2.0), Error);
  CHECK_THROWS_AS(pool_proposal_features(t, 2.0, 1.0), Error);
}

TEST_CASE("pooling is monotone under span widening for non-negative features") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    FeatureTrack t;
    t.dim = 4;
    t.len = 20;
    t.fps = 5.0;
    t.data = Tensor2(4, 20);
    for (double& v : t.data.data) v = std::fabs(rng.normal());
    double dur = t.duration_seconds();
    double a = rng.uniform(0.0, dur - 0.5);
    double b = rng.uniform(a + 0.1, dur);
    double a2 = rng.uniform(0.0, a);
    double b2 = rng.uniform(b, dur);
    if (!(a2 < b2)) continue;
    auto inner = pool_proposal_features(t, a, b);
    auto outer = pool_proposal_features(t, a2, b2);
    for (int d = 0; d < 4; ++d) REQUIRE(outer[d] >= inner[d]);
  }
}

TEST_CASE("positional_input") {
  PositionalInput p = positional_input(0.0, 10.0, 10.0);
  CHECK(p.p_r == 0.0);
  CHECK(p.p_d == 10.0);

  PositionalInput q = positional_input(5.0, 7.0, 10.0);
  CHECK(q.p_r == 0.5);
  CHECK(q.p_d == 2.0);

  PositionalInput r1 = positional_input(3.0, 3.0 + 1e-9, 10.0);
  CHECK(r1.p_r == 0.3);
  CHECK(r1.p_d == doctest::Approx(1e-9));

  CHECK_THROWS_AS(positional_input(0.0, 1.0, 0.0), Error);
  CHECK_THROWS_AS(positional_input(0.0, 1.0, -2.0), Error);
  CHECK_THROWS_AS(positional_input(2.0, 1.0, 10.0), Error);
}

TEST_CASE("positional reconstruction identity") {
  // Exact when T is a power of two and times are dyadic; within 1 ulp
  // otherwise.
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    double T = 64.0;
    double t_s = rng.uniform_int(0, 255) * 0.25;
    double t_e = t_s + 0.25 * rng.uniform_int(1, 255 - static_cast<int>(t_s * 4));
    if (t_e > T) continue;
    PositionalInput p = positional_input(t_s, t_e, T);
    REQUIRE(p.p_r * T + p.p_d == t_e);
  }
  for (int trial = 0; trial < 200; ++trial) {
    double T = rng.uniform(5.0, 50.0);
    double t_s = rng.uniform(0.0, T - 1.0);
    double t_e = rng.uniform(t_s + 0.1, T);
    PositionalInput p = positional_input(t_s, t_e, T);
    REQUIRE(p.p_r * T + p.p_d == doctest::Approx(t_e).epsilon(1e-12));
  }
}

TEST_CASE("synthetic generator basics") {
  SynthSpec spec;
  spec.videos = 2;
  spec.visual_classes = 0;
  spec.audio_classes = 1;
  spec.context_groups = 0;
  spec.instances_per_video = 1;
  spec.feature_dim = 6;
  spec.noise_sigma = 0.0;
  SynthCorpus corpus = generate_synthetic(spec, 5);

  REQUIRE(corpus.videos.size() == 2);
  REQUIRE(corpus.classes.size() == 1);
  CHECK(corpus.classes[0].family == ClassFamily::audio);

  // sigma = 0: audio equals the signature exactly over the span (modulo the
  // f32 storage quantization); visual is noise-free zeros there.
  const AnnotatedVideo& v = corpus.videos[0];
  REQUIRE(v.segments.size() == 1);
  const GtSegment& seg = v.segments[0];
  int i_s = static_cast<int>(snippet_index(seg.t_s, spec.fps));
  int i_e = static_cast<int>(snippet_index(seg.t_e, spec.fps));
  for (int i = i_s; i <= i_e; ++i)
    for (int d = 0; d < spec.feature_dim; ++d) {
      CHECK(v.audio.data.at(d, i) ==
            static_cast<double>(static_cast<float>(corpus.classes[0].audio_sig[d])));
      CHECK(v.visual.data.at(d, i) == 0.0);
    }

  // determinism: same seed, bit-identical corpus
  SynthCorpus again = generate_synthetic(spec, 5);
  for (size_t vi = 0; vi < corpus.videos.size(); ++vi) {
    CHECK(corpus.videos[vi].duration == again.videos[vi].duration);
    CHECK(corpus.videos[vi].visual.data.data == again.videos[vi].visual.data.data);
    CHECK(corpus.videos[vi].audio.data.data == again.videos[vi].audio.data.data);
    REQUIRE(corpus.videos[vi].segments.size() == again.videos[vi].segments.size());
    for (size_t si = 0; si < corpus.videos[vi].segments.size(); ++si) {
      CHECK(corpus.videos[vi].segments[si].t_s == again.videos[vi].segments[si].t_s);
      CHECK(corpus.videos[vi].segments[si].verb == again.videos[vi].segments[si].verb);
    }
  }

  SynthCorpus other = generate_synthetic(spec, 6);
  bool any_diff = false;
  for (size_t k = 0; k < corpus.videos[0].audio.data.data.size(); ++k)
    if (corpus.videos[0].audio.data.data[k] != other.videos[0].audio.data.data[k])
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("synthetic occlusion erases the stated share of span snippets") {
  SynthSpec spec;
  spec.videos = 4;
  spec.visual_classes = 2;
  spec.audio_classes = 0;
  spec.instances_per_video = 4;
  spec.feature_dim = 5;
  spec.noise_sigma = 0.0;
  spec.occlusion_rate = 1.0;
  spec.occ_low_share = 0.0;
  spec.occ_high_min = 0.5;
  spec.occ_high_max = 0.5;  // fraction always exactly one half
  SynthCorpus corpus = generate_synthetic(spec, 9);

  int checked = 0;
  for (const AnnotatedVideo& v : corpus.videos) {
    for (const GtSegment& seg : v.segments) {
      REQUIRE(seg.occlusion_fraction == 0.5);
      int i_s = static_cast<int>(snippet_index(seg.t_s, spec.fps));
      int i_e = static_cast<int>(snippet_index(seg.t_e, spec.fps));
      int n = i_e - i_s + 1;
      int zero_cols = 0;
      for (int i = i_s; i <= i_e; ++i) {
        bool all_zero = true;
        for (int d = 0; d < spec.feature_dim; ++d)
          if (v.visual.data.at(d, i) != 0.0) all_zero = false;
        if (all_zero) ++zero_cols;
      }
      CHECK(zero_cols == static_cast<int>(std::llround(0.5 * n)));
      ++checked;
    }
  }
  CHECK(checked >= 8);
}

TEST_CASE("synthetic context classes share a visual signature and follow their cue") {
  SynthSpec spec;
  spec.videos = 6;
  spec.visual_classes = 2;
  spec.audio_classes = 0;
  spec.context_groups = 1;
  spec.instances_per_video = 8;
  spec.feature_dim = 4;
  SynthCorpus corpus = generate_synthetic(spec, 21);
  REQUIRE(corpus.classes.size() == 4);
  CHECK(corpus.classes[2].family == ClassFamily::context);
  CHECK(corpus.classes[3].family == ClassFamily::context);
  CHECK(corpus.classes[2].visual_sig == corpus.classes[3].visual_sig);
  CHECK(corpus.classes[2].predecessor == 0);
  CHECK(corpus.classes[3].predecessor == 1);
  for (const AnnotatedVideo& v : corpus.videos) {
    for (size_t i = 0; i < v.segments.size(); ++i) {
      int cls = v.segments[i].verb;
      if (corpus.classes[cls].family == ClassFamily::context) {
        REQUIRE(i > 0);
        CHECK(v.segments[i - 1].verb == corpus.classes[cls].predecessor);
      }
    }
  }
}

TEST_CASE("synthetic spec validation") {
  SynthSpec spec;
  spec.visual_classes = 0;
  spec.audio_classes = 0;
  spec.context_groups = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), Error);
  try {
    generate_synthetic(spec, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::spec);
  }
  SynthSpec ctx;
  ctx.visual_classes = 1;
  ctx.context_groups = 1;
  CHECK_THROWS_AS(generate_synthetic(ctx, 1), Error);
}

TEST_CASE("feature file round trip") {
  fs::path dir = temp_dir("feat");
  Rng rng(4);
  FeatureTrack t;
  t.modality = Modality::audio;
  t.dim = 3;
  t.len = 7;
  t.fps = 5.0;
  t.data = Tensor2(3, 7);
  for (double& v : t.data.data)
    v = static_cast<double>(static_cast<float>(rng.normal()));

  std::string path = (dir / "track.owlf").string();
  write_feature_file(path, t);
  FeatureTrack r = read_feature_file(path);
  CHECK(r.modality == Modality::audio);
  CHECK(r.dim == 3);
  CHECK(r.len == 7);
  CHECK(r.fps == 5.0);
  CHECK(r.data.data == t.data.data);
}

TEST_CASE("feature file parse errors carry byte offsets") {
  fs::path dir = temp_dir("featerr");
  FeatureTrack t = make_track({1, 2, 3}, 2.0);
  std::string path = (dir / "track.owlf").string();
  write_feature_file(path, t);

  // truncate mid-payload
  {
    std::ifstream in(path, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size() - 5));
  }
  try {
    read_feature_file(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("byte 29") != std::string::npos);
  }

  // bad magic
  std::string bad = (dir / "bad.owlf").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOPExxxxxxxxxxxxxxxxxxxxxxxxxxxx";
  }
  try {
    read_feature_file(bad);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
  }

  // L = 0 rejected
  FeatureTrack empty;
  empty.dim = 2;
  empty.len = 0;
  empty.fps = 1.0;
  empty.data = Tensor2(2, 0);
  CHECK_THROWS_AS(write_feature_file((dir / "e.owlf").string(), empty), Error);
}

TEST_CASE("annotations, taxonomy and corpus round trip") {
  fs::path dir = temp_dir("corpus");
  SynthSpec spec;
  spec.videos = 2;
  spec.visual_classes = 2;
  spec.audio_classes = 1;
  spec.instances_per_video = 3;
  spec.feature_dim = 4;
  spec.taxonomy_mode = TaxonomyMode::verb_noun;
  SynthCorpus corpus = generate_synthetic(spec, 11);
  write_corpus(dir.string(), corpus);

  Corpus r = read_corpus(dir.string());
  CHECK(r.taxonomy.mode == TaxonomyMode::verb_noun);
  CHECK(r.taxonomy.n_verbs == 3);
  CHECK(r.taxonomy.valid_actions.size() == 3);
  REQUIRE(r.videos.size() == 2);
  for (size_t vi = 0; vi < 2; ++vi) {
    const AnnotatedVideo* orig = nullptr;
    for (const AnnotatedVideo& v : corpus.videos)
      if (v.video_id == r.videos[vi].video_id) orig = &v;
    REQUIRE(orig != nullptr);
    CHECK(r.videos[vi].duration == orig->duration);
    CHECK(r.videos[vi].visual.data.data == orig->visual.data.data);
    CHECK(r.videos[vi].audio.data.data == orig->audio.data.data);
    REQUIRE(r.videos[vi].segments.size() == orig->segments.size());
    for (size_t si = 0; si < orig->segments.size(); ++si) {
      CHECK(r.videos[vi].segments[si].t_s == orig->segments[si].t_s);
      CHECK(r.videos[vi].segments[si].t_e == orig->segments[si].t_e);
      CHECK(r.videos[vi].segments[si].verb == orig->segments[si].verb);
      CHECK(r.videos[vi].segments[si].noun == orig->segments[si].noun);
      CHECK(r.videos[vi].segments[si].occlusion_fraction ==
            orig->segments[si].occlusion_fraction);
    }
  }

  CHECK_THROWS_AS(read_corpus((dir / "nonexistent").string()), Error);
}

TEST_CASE("annotation validation rejects bad segments") {
  fs::path dir = temp_dir("badann");
  std::string path = (dir / "annotations.json").string();
  {
    std::ofstream out(path);
    out << R"({"video_id":"x","duration":10.0,"segments":[
      {"t_s":5.0,"t_e":3.0,"verb":0,"noun":0,"occlusion_fraction":0.0}]})";
  }
  CHECK_THROWS_AS(read_annotations(path), Error);
  {
    std::ofstream out(path, std::ios::trunc);
    out << R"({"video_id":"x","duration":10.0,"segments":[
      {"t_s":1.0,"t_e":3.0,"verb":0,"noun":0,"occlusion_fraction":1.5}]})";
  }
  try {
    read_annotations(path);
    FAIL("expected metadata error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::metadata);
  }
}
