#pragma once

#include <string>
#include <vector>

#include "owl/featstore.hpp"
#include "owl/proposals.hpp"
#include "owl/tensor.hpp"

namespace owl {

// One proposal as seen by the classifier: pooled features per modality,
// positional inputs and the generator confidence.
struct ProposalToken {
  std::vector<double> z_v;
  std::vector<double> z_a;
  PositionalInput pos;
  double t_s = 0.0;
  double t_e = 0.0;
  double gen_score = 0.0;
};

// Classified segment.
struct Detection {
  double t_s = 0.0;
  double t_e = 0.0;
  int verb = 0;
  int noun = -1;  // -1 in single_action mode
  double score = 0.0;
};

// Pools features, computes positional inputs and sorts by
// (t_s, t_e, -score). Token rank in this order defines attention
// neighborhoods.
std::vector<ProposalToken> build_tokens(const std::vector<Proposal>& proposals,
                                        const AnnotatedVideo& video);

// Band mask over ranks: allow |i - j| <= W/2, diagonal always allowed.
// W must be even and >= 0; W = 0 yields the identity mask.
AttentionMask banded_attention_mask(int m, int window);

struct OwlConfig {
  int d_model = 64;
  int heads = 4;
  int pos_dim = 8;  // D^e
  int ff_dim = 128;
  int window = 4;  // W; values >= 2*(M-1) give full attention
  double theta_pos = 0.5;
  double lr = 0.08;
  int epochs = 40;
  uint64_t seed = 1;
  int top_actions = 5;  // detections emitted per proposal
};

struct AttnParams {
  std::vector<Param> wq, wk, wv;  // one d_model x d_head triple per head
  Param wo, bo;
  Param ln_g, ln_b;
};

struct FfnParams {
  Param w1, b1, w2, b2;
  Param ln_g, ln_b;
};

// Audio encoder (self-attention + feed-forward), visual decoder
// (self-attention, cross-attention into the encoder output, feed-forward),
// learned positional encodings, verb/noun heads. Single-action taxonomies
// drop the noun head.
struct OwlModel {
  OwlConfig cfg;
  TaxonomyMode mode = TaxonomyMode::verb_noun;
  int n_verbs = 0;
  int n_nouns = 0;
  int d_visual = 0;
  int d_audio = 0;

  Param pos_w, pos_b;
  Param in_v_w, in_v_b;
  Param in_a_w, in_a_b;
  AttnParams enc_self;
  FfnParams enc_ffn;
  AttnParams dec_self;
  AttnParams dec_cross;
  FfnParams dec_ffn;
  Param verb_w, verb_b;
  Param noun_w, noun_b;  // empty in single_action mode

  std::vector<Param*> params();  // declaration order
};

OwlModel make_owl_model(const OwlConfig& cfg, const Taxonomy& tax, int d_visual,
                        int d_audio, Rng& rng);

// Multi-head attention with residual and per-token normalization. Queries
// come from xq, keys/values from xkv; scores are scaled by 1/sqrt(d_head).
Tape::NodeId attention_block(Tape& tape, Tape::NodeId xq, Tape::NodeId xkv,
                             const AttentionMask& mask, int heads, AttnParams& p);

struct OwlForward {
  Tape::NodeId verb_logits = -1;
  Tape::NodeId noun_logits = -1;  // -1 in single_action mode
};

// Tokens must be sorted as produced by build_tokens.
OwlForward owl_forward(Tape& tape, OwlModel& model,
                       const std::vector<ProposalToken>& tokens,
                       const AttentionMask& mask);

struct LabelPair {
  int verb = 0;
  int noun = 0;
};

// Each proposal takes the labels of its max-tIoU GT when that tIoU reaches
// theta_pos, else background (verb index V, noun index U). tIoU ties go to
// the GT with the earlier start.
std::vector<LabelPair> assign_labels(const std::vector<ProposalToken>& tokens,
                                     const std::vector<GtSegment>& gts,
                                     double theta_pos, const Taxonomy& tax);

struct OwlTrainInput {
  const AnnotatedVideo* video = nullptr;
  std::vector<Proposal> proposals;
};

TrainCurve train_owl(OwlModel& model, const std::vector<OwlTrainInput>& data,
                     const Taxonomy& tax, const OwlConfig& cfg);

// Per-token class posteriors (softmax over each head), for detection
// assembly and diagnostics.
struct TokenPosteriors {
  Tensor2 verb;  // M x (V+1)
  Tensor2 noun;  // M x (U+1); empty in single_action mode
};

TokenPosteriors owl_posteriors(const OwlModel& model,
                               const std::vector<ProposalToken>& tokens);

// Shared detection assembly: for every valid (verb, noun) action the score is
// P(verb) * P(noun) * gen_score; background never appears. Top `top_actions`
// per proposal are kept.
std::vector<Detection> assemble_detections(const TokenPosteriors& post,
                                           const std::vector<ProposalToken>& tokens,
                                           const Taxonomy& tax, int top_actions);

std::vector<Detection> detect(const OwlModel& model,
                              const std::vector<Proposal>& proposals,
                              const AnnotatedVideo& video, const Taxonomy& tax);

// Checkpoint container shared by all models: "OWLM" | u32 version |
// u32 json_len | config JSON | u32 param_count | params (id, rows, cols,
// f64 data, little-endian) in declaration order.
void write_checkpoint(const std::string& path, const std::string& config_json,
                      const std::vector<Param*>& params);
struct Checkpoint {
  std::string config_json;
  std::vector<Param> params;
};
Checkpoint read_checkpoint(const std::string& path);

void save_owl_model(const std::string& path, const OwlModel& model,
                    const std::string& meta_json);
OwlModel load_owl_model(const std::string& path);

void save_tem_model(const std::string& path, const TemModel& model,
                    const std::string& meta_json);
TemModel load_tem_model(const std::string& path);

// Detection interchange JSON: {video_id, detections:[{t_s,t_e,verb,noun,score}]}.
void write_detections(const std::string& path, const std::string& video_id,
                      const std::vector<Detection>& dets, const std::string& meta_json);
std::pair<std::string, std::vector<Detection>> read_detections(const std::string& path);

}  // namespace owl
