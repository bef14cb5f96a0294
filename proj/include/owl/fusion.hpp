#pragma once

#include <string>
#include <vector>

#include "owl/evaltal.hpp"
#include "owl/owl_model.hpp"

namespace owl {

enum class FusionStrategy {
  visual_only,
  audio_only,
  early,
  intermediate,
  late_self_gate,
  late_cross_gate,
};

FusionStrategy fusion_strategy_from_string(const std::string& s);
std::string to_string(FusionStrategy s);

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::early;
  int hidden = 64;
  // Supervision branches. Late variants supervise V and A (plus the fused
  // scores); intermediate supervises any subset of {V, A, AV}.
  bool sup_v = false;
  bool sup_a = false;
  bool sup_av = true;
  double lr = 0.1;
  int epochs = 40;
  uint64_t seed = 1;
  double theta_pos = 0.5;
  int top_actions = 5;
};

// Per-proposal classifier baselines. All strategies share the detection
// format and checkpoint container with the OWL model.
struct FusionModel {
  FusionConfig cfg;
  TaxonomyMode mode = TaxonomyMode::verb_noun;
  int n_verbs = 0;
  int n_nouns = 0;
  int d_visual = 0;
  int d_audio = 0;

  // early / single-modality trunk
  Param trunk_w, trunk_b;
  // per-modality branches (intermediate, late)
  Param branch_v_w, branch_v_b, branch_a_w, branch_a_b;
  // heads: fused (early/single/intermediate-AV) and per-branch
  Param head_av_verb_w, head_av_verb_b, head_av_noun_w, head_av_noun_b;
  Param head_v_verb_w, head_v_verb_b, head_v_noun_w, head_v_noun_b;
  Param head_a_verb_w, head_a_verb_b, head_a_noun_w, head_a_noun_b;
  // sigmoid gates (late fusion), one FC per modality emitting verb and noun
  // class weights
  Param gate_v_verb_w, gate_v_verb_b, gate_v_noun_w, gate_v_noun_b;
  Param gate_a_verb_w, gate_a_verb_b, gate_a_noun_w, gate_a_noun_b;

  std::vector<Param*> params();
};

FusionModel make_fusion_model(const FusionConfig& cfg, const Taxonomy& tax,
                              int d_visual, int d_audio, Rng& rng);

// Nodes are -1 where a strategy does not produce that output. `final_*` carry
// the scores used at inference (softmax turns them into posteriors).
struct FusionForward {
  Tape::NodeId final_verb = -1, final_noun = -1;
  Tape::NodeId v_verb = -1, v_noun = -1;
  Tape::NodeId a_verb = -1, a_noun = -1;
  Tape::NodeId gate_v_verb = -1, gate_a_verb = -1;
};

// force_gate_v / force_gate_a override the learned gate outputs with fixed
// per-class weights (diagnostic hook used by the gate-forcing tests).
FusionForward fusion_forward(Tape& tape, FusionModel& model,
                             const std::vector<ProposalToken>& tokens,
                             const Tensor2* force_gate_v = nullptr,
                             const Tensor2* force_gate_a = nullptr);

TrainCurve train_fusion(FusionModel& model, const std::vector<OwlTrainInput>& data,
                        const Taxonomy& tax, const FusionConfig& cfg);

TokenPosteriors fusion_posteriors(const FusionModel& model,
                                  const std::vector<ProposalToken>& tokens);

std::vector<Detection> detect_fusion(const FusionModel& model,
                                     const std::vector<Proposal>& proposals,
                                     const AnnotatedVideo& video, const Taxonomy& tax);

void save_fusion_model(const std::string& path, const FusionModel& model,
                       const std::string& meta_json);
FusionModel load_fusion_model(const std::string& path);

// Generator-modality x classifier-modality grid of average action mAP over
// a synthetic corpus: trains a TEM per generator modality and an FC-concat
// classifier per classifier modality, per seed.
struct ModalityGrid {
  std::vector<std::string> gen_labels;   // rows: G-A, G-V, G-AV
  std::vector<std::string> cls_labels;   // cols: C-A, C-V, C-AV
  std::vector<Tensor2> per_seed;         // 3x3 each
  Tensor2 mean;                          // 3x3
};

ModalityGrid modality_grid(const std::vector<AnnotatedVideo>& corpus,
                           const Taxonomy& tax, const std::vector<uint64_t>& seeds,
                           TemConfig tem_cfg, const ProposalConfig& prop_cfg,
                           FusionConfig fusion_cfg, const EvalConfig& eval_cfg);

}  // namespace owl
