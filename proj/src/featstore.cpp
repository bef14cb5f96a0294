#include "owl/featstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "owl/binio.hpp"

namespace owl {

namespace fs = std::filesystem;
using nlohmann::json;

bool Taxonomy::is_valid_action(int verb, int noun) const {
  if (mode == TaxonomyMode::single_action) return verb >= 0 && verb < n_verbs;
  for (const auto& [v, n] : valid_actions)
    if (v == verb && n == noun) return true;
  return false;
}

void Taxonomy::validate() const {
  if (n_verbs < 1) fail(ErrorKind::spec, "taxonomy: n_verbs must be >= 1");
  if (mode == TaxonomyMode::verb_noun) {
    if (n_nouns < 1) fail(ErrorKind::spec, "taxonomy: n_nouns must be >= 1");
    if (valid_actions.empty()) fail(ErrorKind::spec, "taxonomy: no valid actions");
    for (const auto& [v, n] : valid_actions)
      if (v < 0 || v >= n_verbs || n < 0 || n >= n_nouns)
        fail(ErrorKind::spec, "taxonomy: action (" + std::to_string(v) + "," +
                                  std::to_string(n) + ") out of bounds");
  }
}

long long snippet_index(double t, double fps) { return std::llround(t * fps); }

std::vector<double> pool_proposal_features(const FeatureTrack& track, double t_s,
                                           double t_e) {
  if (!(t_s < t_e))
    fail(ErrorKind::segment, "pool: t_e must exceed t_s, got [" +
                                 std::to_string(t_s) + "," + std::to_string(t_e) + "]");
  if (t_s < 0.0 || t_e > track.duration_seconds() + 1e-9)
    fail(ErrorKind::segment, "pool: span outside track duration");
  auto clamp = [&](long long i) {
    return static_cast<int>(std::clamp<long long>(i, 0, track.len - 1));
  };
  int i_s = clamp(snippet_index(t_s, track.fps));
  int i_e = clamp(snippet_index(t_e, track.fps));
  if (i_s > i_e) i_s = i_e = clamp(snippet_index(0.5 * (t_s + t_e), track.fps));
  std::vector<double> out(track.dim);
  for (int d = 0; d < track.dim; ++d) {
    double m = track.data.at(d, i_s);
    for (int i = i_s + 1; i <= i_e; ++i) m = std::max(m, track.data.at(d, i));
    out[d] = m;
  }
  return out;
}

PositionalInput positional_input(double t_s, double t_e, double duration) {
  if (!(duration > 0.0)) fail(ErrorKind::duration, "positional_input: duration <= 0");
  if (!(0.0 <= t_s && t_s < t_e && t_e <= duration))
    fail(ErrorKind::segment, "positional_input: need 0 <= t_s < t_e <= T");
  return PositionalInput{t_s / duration, t_e - t_s};
}

// -------------------------------------------------------------------------
// Synthetic generator
// -------------------------------------------------------------------------

namespace {

void validate_spec(const SynthSpec& s) {
  int n_classes = s.visual_classes + s.audio_classes + 2 * s.context_groups;
  if (n_classes < 1) fail(ErrorKind::spec, "synth: zero classes");
  if (s.visual_classes < 0 || s.audio_classes < 0 || s.context_groups < 0)
    fail(ErrorKind::spec, "synth: negative class counts");
  if (s.context_groups > 0 && s.visual_classes < 2)
    fail(ErrorKind::spec, "synth: context groups need >= 2 visual classes as cues");
  if (s.videos < 1) fail(ErrorKind::spec, "synth: need >= 1 video");
  if (s.instances_per_video < 1) fail(ErrorKind::spec, "synth: need >= 1 instance per video");
  if (s.feature_dim < 1) fail(ErrorKind::spec, "synth: feature_dim must be >= 1");
  if (!(s.fps > 0.0)) fail(ErrorKind::spec, "synth: fps must be > 0");
  if (s.noise_sigma < 0.0) fail(ErrorKind::spec, "synth: negative noise sigma");
  if (!(s.dur_min > 0.0 && s.dur_min <= s.dur_max))
    fail(ErrorKind::spec, "synth: bad duration range");
  if (!(s.gap_min >= 0.0 && s.gap_min <= s.gap_max))
    fail(ErrorKind::spec, "synth: bad gap range");
  if (s.occlusion_rate < 0.0 || s.occlusion_rate > 1.0)
    fail(ErrorKind::spec, "synth: occlusion_rate must be in [0,1]");
}

std::vector<double> draw_signature(Rng& rng, int dim, double amplitude) {
  std::vector<double> sig(dim);
  for (double& v : sig) v = amplitude * rng.normal();
  return sig;
}

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

SynthCorpus generate_synthetic(const SynthSpec& spec, uint64_t seed) {
  validate_spec(spec);
  const int n_classes = spec.visual_classes + spec.audio_classes + 2 * spec.context_groups;

  SynthCorpus corpus;
  corpus.classes.resize(n_classes);
  Rng master(Rng::mix(seed, 0x514e5448));
  for (int c = 0; c < spec.visual_classes; ++c) {
    corpus.classes[c].family = ClassFamily::visual;
    corpus.classes[c].visual_sig = draw_signature(master, spec.feature_dim, spec.amplitude);
  }
  for (int c = 0; c < spec.audio_classes; ++c) {
    int id = spec.visual_classes + c;
    corpus.classes[id].family = ClassFamily::audio;
    corpus.classes[id].audio_sig = draw_signature(master, spec.feature_dim, spec.amplitude);
  }
  const int context_base = spec.visual_classes + spec.audio_classes;
  for (int g = 0; g < spec.context_groups; ++g) {
    auto shared = draw_signature(master, spec.feature_dim, spec.amplitude);
    for (int k = 0; k < 2; ++k) {
      int id = context_base + 2 * g + k;
      corpus.classes[id].family = ClassFamily::context;
      corpus.classes[id].visual_sig = shared;
      corpus.classes[id].predecessor = (2 * g + k) % spec.visual_classes;
    }
  }

  corpus.taxonomy.mode = spec.taxonomy_mode;
  corpus.taxonomy.n_verbs = n_classes;
  if (spec.taxonomy_mode == TaxonomyMode::verb_noun) {
    corpus.taxonomy.n_nouns = n_classes;
    for (int c = 0; c < n_classes; ++c) corpus.taxonomy.valid_actions.push_back({c, c});
  } else {
    corpus.taxonomy.n_nouns = 0;
  }

  // Emission units: standalone visual/audio classes plus (cue, ambiguous)
  // chains for every context class. Scripted order within a chain is what
  // makes the ambiguous classes learnable from context.
  std::vector<std::vector<int>> units;
  for (int c = 0; c < spec.visual_classes + spec.audio_classes; ++c) units.push_back({c});
  for (int g = 0; g < spec.context_groups; ++g)
    for (int k = 0; k < 2; ++k) {
      int id = context_base + 2 * g + k;
      units.push_back({corpus.classes[id].predecessor, id});
    }

  for (int v = 0; v < spec.videos; ++v) {
    Rng rng(Rng::mix(seed, 0xa11ce000ULL + static_cast<uint64_t>(v)));
    AnnotatedVideo video;
    video.video_id = spec.video_id_prefix + "_" + std::to_string(v);

    std::vector<int> script;
    while (static_cast<int>(script.size()) < spec.instances_per_video) {
      const auto& unit = units[rng.uniform_int(0, static_cast<int>(units.size()) - 1)];
      script.insert(script.end(), unit.begin(), unit.end());
    }
    // Trailing truncation may drop the second half of a chain, never the cue,
    // so scripted predecessors stay intact.
    script.resize(spec.instances_per_video);

    double t = rng.uniform(spec.gap_min, spec.gap_max);
    for (int cls : script) {
      GtSegment seg;
      seg.t_s = t;
      seg.t_e = t + rng.uniform(spec.dur_min, spec.dur_max);
      seg.verb = cls;
      seg.noun = spec.taxonomy_mode == TaxonomyMode::verb_noun ? cls : -1;
      video.segments.push_back(seg);
      t = seg.t_e + rng.uniform(spec.gap_min, spec.gap_max);
    }

    for (GtSegment& seg : video.segments) {
      bool occludable = !corpus.classes[seg.verb].visual_sig.empty();
      if (occludable && spec.occlusion_rate > 0.0 && rng.uniform() < spec.occlusion_rate) {
        seg.occlusion_fraction = rng.uniform() < spec.occ_low_share
                                     ? rng.uniform(spec.occ_low_min, spec.occ_low_max)
                                     : rng.uniform(spec.occ_high_min, spec.occ_high_max);
      }
    }

    int len = static_cast<int>(std::ceil(t * spec.fps));
    len = std::max(len, 1);
    video.duration = len / spec.fps;

    auto make_track = [&](Modality m) {
      FeatureTrack track;
      track.modality = m;
      track.dim = spec.feature_dim;
      track.len = len;
      track.fps = spec.fps;
      track.data = Tensor2(spec.feature_dim, len);
      for (double& x : track.data.data) x = spec.noise_sigma * rng.normal();
      return track;
    };
    auto span_snippets = [&](const GtSegment& seg) {
      int i_s = static_cast<int>(std::clamp<long long>(snippet_index(seg.t_s, spec.fps), 0, len - 1));
      int i_e = static_cast<int>(std::clamp<long long>(snippet_index(seg.t_e, spec.fps), 0, len - 1));
      return std::pair<int, int>{i_s, i_e};
    };
    auto plant = [&](FeatureTrack& track, const std::vector<double>& sig,
                     const GtSegment& seg) {
      auto [i_s, i_e] = span_snippets(seg);
      for (int i = i_s; i <= i_e; ++i)
        for (int d = 0; d < spec.feature_dim; ++d)
          track.data.at(d, i) = sig[d] + spec.noise_sigma * rng.normal();
    };

    video.visual = make_track(Modality::visual);
    for (const GtSegment& seg : video.segments) {
      const auto& info = corpus.classes[seg.verb];
      if (!info.visual_sig.empty()) plant(video.visual, info.visual_sig, seg);
    }
    // Occlusion: erase the signature on a contiguous block of the span.
    for (const GtSegment& seg : video.segments) {
      if (seg.occlusion_fraction <= 0.0) continue;
      auto [i_s, i_e] = span_snippets(seg);
      int n = i_e - i_s + 1;
      int k = static_cast<int>(std::llround(seg.occlusion_fraction * n));
      if (k <= 0) continue;
      k = std::min(k, n);
      int off = rng.uniform_int(0, n - k);
      for (int i = i_s + off; i < i_s + off + k; ++i)
        for (int d = 0; d < spec.feature_dim; ++d)
          video.visual.data.at(d, i) = spec.noise_sigma * rng.normal();
    }

    video.audio = make_track(Modality::audio);
    for (const GtSegment& seg : video.segments) {
      const auto& info = corpus.classes[seg.verb];
      if (!info.audio_sig.empty()) plant(video.audio, info.audio_sig, seg);
    }

    // Features are stored as f32 on disk; quantize now so the in-memory
    // corpus matches its round-trip exactly.
    for (double& x : video.visual.data.data) x = quantize_f32(x);
    for (double& x : video.audio.data.data) x = quantize_f32(x);

    corpus.videos.push_back(std::move(video));
  }
  return corpus;
}

// -------------------------------------------------------------------------
// Binary feature files
// -------------------------------------------------------------------------

using binio::Cursor;
using binio::put_f32;
using binio::put_f64;
using binio::put_u32;
using binio::read_file_bytes;
using binio::write_file_bytes;

void write_feature_file(const std::string& path, const FeatureTrack& track) {
  if (track.dim < 1 || track.len < 1)
    fail(ErrorKind::data, "feature track must have D >= 1 and L >= 1");
  if (!(track.fps > 0.0)) fail(ErrorKind::data, "feature track fps must be > 0");
  if (track.data.rows != track.dim || track.data.cols != track.len)
    fail(ErrorKind::dimension, "feature track data shape " + track.data.shape_str() +
                                   " does not match header");
  std::string out;
  out.reserve(25 + track.data.size() * 4);
  out += "OWLF";
  put_u32(out, 1);
  out.push_back(static_cast<char>(track.modality));
  put_u32(out, static_cast<uint32_t>(track.dim));
  put_u32(out, static_cast<uint32_t>(track.len));
  put_f64(out, track.fps);
  for (int d = 0; d < track.dim; ++d)
    for (int i = 0; i < track.len; ++i)
      put_f32(out, static_cast<float>(track.data.at(d, i)));
  write_file_bytes(path, out);
}

FeatureTrack read_feature_file(const std::string& path) {
  std::string buf = read_file_bytes(path);
  Cursor c{buf};
  c.need(4, "magic");
  if (buf.compare(0, 4, "OWLF") != 0)
    fail(ErrorKind::parse, "parse error at byte 0: bad magic (expected OWLF)");
  c.pos = 4;
  uint32_t version = c.u32("version");
  if (version != 1)
    fail(ErrorKind::parse, "parse error at byte 4: unsupported version " +
                               std::to_string(version));
  uint8_t mod = c.u8("modality");
  if (mod > 1) fail(ErrorKind::parse, "parse error at byte 8: bad modality " +
                                          std::to_string(mod));
  uint32_t dim = c.u32("D");
  uint32_t len = c.u32("L");
  if (dim < 1) fail(ErrorKind::parse, "parse error at byte 9: D must be >= 1");
  if (len < 1) fail(ErrorKind::parse, "parse error at byte 13: L must be >= 1");
  double fps = c.f64("fps");
  if (!(fps > 0.0) || !std::isfinite(fps))
    fail(ErrorKind::parse, "parse error at byte 17: fps must be positive");
  FeatureTrack track;
  track.modality = static_cast<Modality>(mod);
  track.dim = static_cast<int>(dim);
  track.len = static_cast<int>(len);
  track.fps = fps;
  track.data = Tensor2(track.dim, track.len);
  for (int d = 0; d < track.dim; ++d)
    for (int i = 0; i < track.len; ++i)
      track.data.at(d, i) = static_cast<double>(c.f32("payload"));
  if (c.pos != buf.size())
    fail(ErrorKind::parse, "parse error at byte " + std::to_string(c.pos) +
                               ": trailing bytes after payload");
  return track;
}

// -------------------------------------------------------------------------
// JSON annotations / taxonomy
// -------------------------------------------------------------------------

namespace {

json parse_json_file(const std::string& path) {
  std::string buf = read_file_bytes(path);
  json j = json::parse(buf, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::parse, "invalid JSON in " + path);
  return j;
}

void validate_segments(const AnnotatedVideo& v) {
  for (const GtSegment& s : v.segments) {
    if (!(0.0 <= s.t_s && s.t_s < s.t_e && s.t_e <= v.duration + 1e-9))
      fail(ErrorKind::segment, v.video_id + ": segment [" + std::to_string(s.t_s) +
                                   "," + std::to_string(s.t_e) +
                                   "] violates 0 <= t_s < t_e <= T");
    if (s.occlusion_fraction < 0.0 || s.occlusion_fraction > 1.0)
      fail(ErrorKind::metadata, v.video_id + ": occlusion_fraction out of [0,1]");
  }
}

}  // namespace

void write_annotations(const std::string& path, const AnnotatedVideo& video) {
  json segs = json::array();
  for (const GtSegment& s : video.segments) {
    segs.push_back({{"t_s", s.t_s},
                    {"t_e", s.t_e},
                    {"verb", s.verb},
                    {"noun", s.noun},
                    {"occlusion_fraction", s.occlusion_fraction}});
  }
  json j = {{"video_id", video.video_id}, {"duration", video.duration}, {"segments", segs}};
  write_file_bytes(path, j.dump(2) + "\n");
}

AnnotatedVideo read_annotations(const std::string& path) {
  json j = parse_json_file(path);
  AnnotatedVideo v;
  try {
    v.video_id = j.at("video_id").get<std::string>();
    v.duration = j.at("duration").get<double>();
    for (const auto& s : j.at("segments")) {
      GtSegment seg;
      seg.t_s = s.at("t_s").get<double>();
      seg.t_e = s.at("t_e").get<double>();
      seg.verb = s.at("verb").get<int>();
      seg.noun = s.at("noun").get<int>();
      seg.occlusion_fraction = s.at("occlusion_fraction").get<double>();
      v.segments.push_back(seg);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "bad annotations in " + path + ": " + e.what());
  }
  validate_segments(v);
  return v;
}

void write_taxonomy(const std::string& path, const Taxonomy& tax) {
  json actions = json::array();
  for (const auto& [v, n] : tax.valid_actions) actions.push_back({v, n});
  json j = {{"mode", tax.mode == TaxonomyMode::verb_noun ? "verb_noun" : "single_action"},
            {"n_verbs", tax.n_verbs},
            {"n_nouns", tax.n_nouns},
            {"valid_actions", actions}};
  write_file_bytes(path, j.dump(2) + "\n");
}

Taxonomy read_taxonomy(const std::string& path) {
  json j = parse_json_file(path);
  Taxonomy tax;
  try {
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "verb_noun") {
      tax.mode = TaxonomyMode::verb_noun;
    } else if (mode == "single_action") {
      tax.mode = TaxonomyMode::single_action;
    } else {
      fail(ErrorKind::parse, "bad taxonomy mode '" + mode + "' in " + path);
    }
    tax.n_verbs = j.at("n_verbs").get<int>();
    tax.n_nouns = j.at("n_nouns").get<int>();
    for (const auto& a : j.at("valid_actions"))
      tax.valid_actions.push_back({a.at(0).get<int>(), a.at(1).get<int>()});
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "bad taxonomy in " + path + ": " + e.what());
  }
  tax.validate();
  return tax;
}

void write_corpus(const std::string& dir, const SynthCorpus& corpus) {
  fs::create_directories(dir);
  write_taxonomy((fs::path(dir) / "taxonomy.json").string(), corpus.taxonomy);
  for (const AnnotatedVideo& v : corpus.videos) {
    fs::path vd = fs::path(dir) / v.video_id;
    fs::create_directories(vd);
    write_annotations((vd / "annotations.json").string(), v);
    write_feature_file((vd / "visual.owlf").string(), v.visual);
    write_feature_file((vd / "audio.owlf").string(), v.audio);
  }
}

Corpus read_corpus(const std::string& dir) {
  if (!fs::exists(dir)) fail(ErrorKind::dependency, "missing corpus directory: " + dir);
  fs::path tax_path = fs::path(dir) / "taxonomy.json";
  if (!fs::exists(tax_path))
    fail(ErrorKind::dependency, "missing taxonomy: " + tax_path.string());
  Corpus corpus;
  corpus.taxonomy = read_taxonomy(tax_path.string());
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) ids.insert(entry.path().filename().string());
  for (const std::string& id : ids) {
    fs::path vd = fs::path(dir) / id;
    AnnotatedVideo v = read_annotations((vd / "annotations.json").string());
    v.visual = read_feature_file((vd / "visual.owlf").string());
    v.audio = read_feature_file((vd / "audio.owlf").string());
    if (v.visual.fps != v.audio.fps)
      fail(ErrorKind::data, id + ": visual/audio fps mismatch");
    if (v.visual.duration_seconds() + 1e-9 < v.duration ||
        v.audio.duration_seconds() + 1e-9 < v.duration)
      fail(ErrorKind::data, id + ": feature tracks do not cover the video");
    for (const GtSegment& s : v.segments) {
      if (s.verb < 0 || s.verb >= corpus.taxonomy.n_verbs)
        fail(ErrorKind::label, id + ": verb out of taxonomy bounds");
      if (corpus.taxonomy.mode == TaxonomyMode::verb_noun &&
          !corpus.taxonomy.is_valid_action(s.verb, s.noun))
        fail(ErrorKind::label, id + ": (verb,noun) not in valid_actions");
    }
    corpus.videos.push_back(std::move(v));
  }
  if (corpus.videos.empty()) fail(ErrorKind::data, "corpus has no videos: " + dir);
  return corpus;
}

}  // namespace owl
