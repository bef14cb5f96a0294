#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "owl/common.hpp"
#include "owl/tensor.hpp"

namespace owl {

enum class Modality : uint8_t { visual = 0, audio = 1 };

// One modality's snippet-level feature matrix, D channels by L snippets.
struct FeatureTrack {
  Modality modality = Modality::visual;
  int dim = 0;
  int len = 0;
  double fps = 0.0;
  Tensor2 data;  // dim x len

  double duration_seconds() const { return len / fps; }
};

struct GtSegment {
  double t_s = 0.0;
  double t_e = 0.0;
  int verb = 0;
  int noun = -1;  // -1 in single_action mode
  double occlusion_fraction = 0.0;
};

struct AnnotatedVideo {
  std::string video_id;
  double duration = 0.0;
  std::vector<GtSegment> segments;
  FeatureTrack visual;
  FeatureTrack audio;

  const FeatureTrack& track(Modality m) const {
    return m == Modality::visual ? visual : audio;
  }
};

enum class TaxonomyMode { verb_noun, single_action };

struct Taxonomy {
  TaxonomyMode mode = TaxonomyMode::verb_noun;
  int n_verbs = 0;
  int n_nouns = 0;
  std::vector<std::pair<int, int>> valid_actions;

  bool is_valid_action(int verb, int noun) const;
  void validate() const;
};

struct PositionalInput {
  double p_r = 0.0;  // relative start, t_s / T
  double p_d = 0.0;  // absolute duration in seconds
};

// Max-pools the snippets covered by [t_s, t_e]. Fractional times round
// half-away-from-zero to snippet indices, clamped to the track; a span that
// degenerates after clamping collapses to the snippet nearest its midpoint.
std::vector<double> pool_proposal_features(const FeatureTrack& track, double t_s,
                                           double t_e);

PositionalInput positional_input(double t_s, double t_e, double duration);

// Snippet index for a timestamp, before clamping.
long long snippet_index(double t, double fps);

// ---------------------------------------------------------------------------
// Synthetic corpus generator.
//
// Three class families drive the qualitative experiments:
//   visual  - signature planted in the visual track only
//   audio   - signature planted in the audio track only, visual stays noise
//   context - pairs of classes sharing one visual signature, told apart only
//             by which (visual-family) class precedes them in the script
// Occlusion replaces the visual signature with noise on a contiguous block
// covering occlusion_fraction of an instance's snippets and records the
// fraction as metadata.
// ---------------------------------------------------------------------------

struct SynthSpec {
  int videos = 20;
  int visual_classes = 4;
  int audio_classes = 4;
  int context_groups = 0;  // each group adds two ambiguous classes
  int instances_per_video = 8;
  int feature_dim = 64;  // per modality
  double fps = 5.0;
  double noise_sigma = 0.2;
  double amplitude = 1.0;
  double occlusion_rate = 0.0;  // probability an occludable instance is hit
  double occ_low_share = 0.25;  // share of occluded instances in the low band
  double occ_low_min = 0.01, occ_low_max = 0.075;
  double occ_high_min = 0.9, occ_high_max = 1.0;
  double dur_min = 1.0, dur_max = 2.5;
  double gap_min = 0.5, gap_max = 1.5;
  TaxonomyMode taxonomy_mode = TaxonomyMode::single_action;
  std::string video_id_prefix = "synth";
};

enum class ClassFamily { visual, audio, context };

struct SynthClassInfo {
  ClassFamily family = ClassFamily::visual;
  int predecessor = -1;  // scripted predecessor class (context classes only)
  std::vector<double> visual_sig;  // empty if none
  std::vector<double> audio_sig;   // empty if none
};

struct SynthCorpus {
  std::vector<AnnotatedVideo> videos;
  Taxonomy taxonomy;
  std::vector<SynthClassInfo> classes;
};

SynthCorpus generate_synthetic(const SynthSpec& spec, uint64_t seed);

// ---------------------------------------------------------------------------
// File formats. Feature files are binary little-endian:
//   "OWLF" | u32 version=1 | u8 modality | u32 D | u32 L | f64 fps |
//   D*L f32 payload, channel-major.
// Annotations and taxonomies are JSON (see README for field names).
// ---------------------------------------------------------------------------

void write_feature_file(const std::string& path, const FeatureTrack& track);
FeatureTrack read_feature_file(const std::string& path);

void write_annotations(const std::string& path, const AnnotatedVideo& video);
// Reads video_id, duration and segments; feature tracks are loaded separately.
AnnotatedVideo read_annotations(const std::string& path);

void write_taxonomy(const std::string& path, const Taxonomy& tax);
Taxonomy read_taxonomy(const std::string& path);

// Corpus directory layout: <dir>/taxonomy.json plus, per video,
// <dir>/<video_id>/{annotations.json, visual.owlf, audio.owlf}.
void write_corpus(const std::string& dir, const SynthCorpus& corpus);
struct Corpus {
  std::vector<AnnotatedVideo> videos;
  Taxonomy taxonomy;
};
Corpus read_corpus(const std::string& dir);

}  // namespace owl
