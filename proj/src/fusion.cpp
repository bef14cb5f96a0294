#include "owl/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace owl {

using nlohmann::json;

FusionStrategy fusion_strategy_from_string(const std::string& s) {
  if (s == "visual_only") return FusionStrategy::visual_only;
  if (s == "audio_only") return FusionStrategy::audio_only;
  if (s == "early") return FusionStrategy::early;
  if (s == "intermediate") return FusionStrategy::intermediate;
  if (s == "late_self_gate") return FusionStrategy::late_self_gate;
  if (s == "late_cross_gate") return FusionStrategy::late_cross_gate;
  fail(ErrorKind::config, "unknown fusion strategy '" + s + "'");
}

std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::visual_only: return "visual_only";
    case FusionStrategy::audio_only: return "audio_only";
    case FusionStrategy::early: return "early";
    case FusionStrategy::intermediate: return "intermediate";
    case FusionStrategy::late_self_gate: return "late_self_gate";
    case FusionStrategy::late_cross_gate: return "late_cross_gate";
  }
  return "?";
}

namespace {

bool is_late(FusionStrategy s) {
  return s == FusionStrategy::late_self_gate || s == FusionStrategy::late_cross_gate;
}

Tensor2 xavier(Rng& rng, int rows, int cols) {
  Tensor2 t(rows, cols);
  double bound = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

void validate_supervision(const FusionConfig& cfg) {
  if (is_late(cfg.strategy)) {
    if (!cfg.sup_v || !cfg.sup_a)
      fail(ErrorKind::config, "late fusion supervises the V and A branches");
  } else if (cfg.strategy == FusionStrategy::intermediate) {
    if (!cfg.sup_v && !cfg.sup_a && !cfg.sup_av)
      fail(ErrorKind::config, "intermediate fusion needs at least one supervised branch");
  } else {
    if (!cfg.sup_av || cfg.sup_v || cfg.sup_a)
      fail(ErrorKind::config, to_string(cfg.strategy) + " supervises only the fused output");
  }
}

}  // namespace

std::vector<Param*> FusionModel::params() {
  std::vector<Param*> out;
  bool vn = mode == TaxonomyMode::verb_noun;
  auto add = [&out](Param& p) { out.push_back(&p); };
  switch (cfg.strategy) {
    case FusionStrategy::visual_only:
    case FusionStrategy::audio_only:
    case FusionStrategy::early:
      add(trunk_w);
      add(trunk_b);
      add(head_av_verb_w);
      add(head_av_verb_b);
      if (vn) {
        add(head_av_noun_w);
        add(head_av_noun_b);
      }
      break;
    case FusionStrategy::intermediate:
      add(branch_v_w);
      add(branch_v_b);
      add(branch_a_w);
      add(branch_a_b);
      add(head_av_verb_w);
      add(head_av_verb_b);
      if (vn) {
        add(head_av_noun_w);
        add(head_av_noun_b);
      }
      add(head_v_verb_w);
      add(head_v_verb_b);
      add(head_a_verb_w);
      add(head_a_verb_b);
      if (vn) {
        add(head_v_noun_w);
        add(head_v_noun_b);
        add(head_a_noun_w);
        add(head_a_noun_b);
      }
      break;
    case FusionStrategy::late_self_gate:
    case FusionStrategy::late_cross_gate:
      add(branch_v_w);
      add(branch_v_b);
      add(branch_a_w);
      add(branch_a_b);
      add(head_v_verb_w);
      add(head_v_verb_b);
      add(head_a_verb_w);
      add(head_a_verb_b);
      add(gate_v_verb_w);
      add(gate_v_verb_b);
      add(gate_a_verb_w);
      add(gate_a_verb_b);
      if (vn) {
        add(head_v_noun_w);
        add(head_v_noun_b);
        add(head_a_noun_w);
        add(head_a_noun_b);
        add(gate_v_noun_w);
        add(gate_v_noun_b);
        add(gate_a_noun_w);
        add(gate_a_noun_b);
      }
      break;
  }
  return out;
}

FusionModel make_fusion_model(const FusionConfig& cfg, const Taxonomy& tax,
                              int d_visual, int d_audio, Rng& rng) {
  if (cfg.hidden < 1) fail(ErrorKind::config, "fusion: hidden must be >= 1");
  validate_supervision(cfg);
  FusionModel m;
  m.cfg = cfg;
  m.mode = tax.mode;
  m.n_verbs = tax.n_verbs;
  m.n_nouns = tax.n_nouns;
  m.d_visual = d_visual;
  m.d_audio = d_audio;
  int H = cfg.hidden;
  int nv = tax.n_verbs + 1;
  int nn = tax.n_nouns + 1;
  bool vn = tax.mode == TaxonomyMode::verb_noun;

  switch (cfg.strategy) {
    case FusionStrategy::visual_only:
    case FusionStrategy::audio_only:
    case FusionStrategy::early: {
      int din = cfg.strategy == FusionStrategy::visual_only
                    ? d_visual
                    : (cfg.strategy == FusionStrategy::audio_only ? d_audio
                                                                  : d_visual + d_audio);
      m.trunk_w = Param("trunk.w", xavier(rng, din, H));
      m.trunk_b = Param("trunk.b", Tensor2(1, H));
      m.head_av_verb_w = Param("head_av.verb_w", xavier(rng, H, nv));
      m.head_av_verb_b = Param("head_av.verb_b", Tensor2(1, nv));
      if (vn) {
        m.head_av_noun_w = Param("head_av.noun_w", xavier(rng, H, nn));
        m.head_av_noun_b = Param("head_av.noun_b", Tensor2(1, nn));
      }
      break;
    }
    case FusionStrategy::intermediate:
    case FusionStrategy::late_self_gate:
    case FusionStrategy::late_cross_gate: {
      m.branch_v_w = Param("branch_v.w", xavier(rng, d_visual, H));
      m.branch_v_b = Param("branch_v.b", Tensor2(1, H));
      m.branch_a_w = Param("branch_a.w", xavier(rng, d_audio, H));
      m.branch_a_b = Param("branch_a.b", Tensor2(1, H));
      if (cfg.strategy == FusionStrategy::intermediate) {
        m.head_av_verb_w = Param("head_av.verb_w", xavier(rng, 2 * H, nv));
        m.head_av_verb_b = Param("head_av.verb_b", Tensor2(1, nv));
        if (vn) {
          m.head_av_noun_w = Param("head_av.noun_w", xavier(rng, 2 * H, nn));
          m.head_av_noun_b = Param("head_av.noun_b", Tensor2(1, nn));
        }
      }
      m.head_v_verb_w = Param("head_v.verb_w", xavier(rng, H, nv));
      m.head_v_verb_b = Param("head_v.verb_b", Tensor2(1, nv));
      m.head_a_verb_w = Param("head_a.verb_w", xavier(rng, H, nv));
      m.head_a_verb_b = Param("head_a.verb_b", Tensor2(1, nv));
      if (vn) {
        m.head_v_noun_w = Param("head_v.noun_w", xavier(rng, H, nn));
        m.head_v_noun_b = Param("head_v.noun_b", Tensor2(1, nn));
        m.head_a_noun_w = Param("head_a.noun_w", xavier(rng, H, nn));
        m.head_a_noun_b = Param("head_a.noun_b", Tensor2(1, nn));
      }
      if (is_late(cfg.strategy)) {
        int gin = cfg.strategy == FusionStrategy::late_cross_gate ? 2 * H : H;
        m.gate_v_verb_w = Param("gate_v.verb_w", xavier(rng, gin, nv));
        m.gate_v_verb_b = Param("gate_v.verb_b", Tensor2(1, nv));
        m.gate_a_verb_w = Param("gate_a.verb_w", xavier(rng, gin, nv));
        m.gate_a_verb_b = Param("gate_a.verb_b", Tensor2(1, nv));
        if (vn) {
          m.gate_v_noun_w = Param("gate_v.noun_w", xavier(rng, gin, nn));
          m.gate_v_noun_b = Param("gate_v.noun_b", Tensor2(1, nn));
          m.gate_a_noun_w = Param("gate_a.noun_w", xavier(rng, gin, nn));
          m.gate_a_noun_b = Param("gate_a.noun_b", Tensor2(1, nn));
        }
      }
      break;
    }
  }
  return m;
}

namespace {

Tensor2 stack_modality(const std::vector<ProposalToken>& tokens, bool visual) {
  int m = static_cast<int>(tokens.size());
  int d = static_cast<int>(visual ? tokens[0].z_v.size() : tokens[0].z_a.size());
  Tensor2 x(m, d);
  for (int i = 0; i < m; ++i) {
    const auto& z = visual ? tokens[i].z_v : tokens[i].z_a;
    for (int j = 0; j < d; ++j) x.at(i, j) = z[j];
  }
  return x;
}

Tensor2 constant_gate(int rows, int cols, double v) { return Tensor2(rows, cols, v); }

}  // namespace

FusionForward fusion_forward(Tape& tape, FusionModel& model,
                             const std::vector<ProposalToken>& tokens,
                             const Tensor2* force_gate_v, const Tensor2* force_gate_a) {
  if (tokens.empty()) fail(ErrorKind::data, "fusion_forward: no tokens");
  int m = static_cast<int>(tokens.size());
  bool vn = model.mode == TaxonomyMode::verb_noun;
  FusionForward out;

  auto head = [&](Tape::NodeId x, Param& w, Param& b) {
    return tape.linear(x, tape.param(w), tape.param(b));
  };

  switch (model.cfg.strategy) {
    case FusionStrategy::visual_only:
    case FusionStrategy::audio_only:
    case FusionStrategy::early: {
      Tape::NodeId x;
      if (model.cfg.strategy == FusionStrategy::visual_only) {
        x = tape.input(stack_modality(tokens, true));
      } else if (model.cfg.strategy == FusionStrategy::audio_only) {
        x = tape.input(stack_modality(tokens, false));
      } else {
        x = tape.concat_cols(tape.input(stack_modality(tokens, true)),
                             tape.input(stack_modality(tokens, false)));
      }
      auto h = tape.relu(head(x, model.trunk_w, model.trunk_b));
      out.final_verb = head(h, model.head_av_verb_w, model.head_av_verb_b);
      if (vn) out.final_noun = head(h, model.head_av_noun_w, model.head_av_noun_b);
      break;
    }
    case FusionStrategy::intermediate: {
      auto hv = tape.relu(head(tape.input(stack_modality(tokens, true)),
                               model.branch_v_w, model.branch_v_b));
      auto ha = tape.relu(head(tape.input(stack_modality(tokens, false)),
                               model.branch_a_w, model.branch_a_b));
      auto hav = tape.concat_cols(hv, ha);
      out.final_verb = head(hav, model.head_av_verb_w, model.head_av_verb_b);
      out.v_verb = head(hv, model.head_v_verb_w, model.head_v_verb_b);
      out.a_verb = head(ha, model.head_a_verb_w, model.head_a_verb_b);
      if (vn) {
        out.final_noun = head(hav, model.head_av_noun_w, model.head_av_noun_b);
        out.v_noun = head(hv, model.head_v_noun_w, model.head_v_noun_b);
        out.a_noun = head(ha, model.head_a_noun_w, model.head_a_noun_b);
      }
      break;
    }
    case FusionStrategy::late_self_gate:
    case FusionStrategy::late_cross_gate: {
      auto hv = tape.relu(head(tape.input(stack_modality(tokens, true)),
                               model.branch_v_w, model.branch_v_b));
      auto ha = tape.relu(head(tape.input(stack_modality(tokens, false)),
                               model.branch_a_w, model.branch_a_b));
      out.v_verb = head(hv, model.head_v_verb_w, model.head_v_verb_b);
      out.a_verb = head(ha, model.head_a_verb_w, model.head_a_verb_b);
      Tape::NodeId gin_v = hv, gin_a = ha;
      if (model.cfg.strategy == FusionStrategy::late_cross_gate)
        gin_v = gin_a = tape.concat_cols(hv, ha);
      int nv = model.n_verbs + 1;
      auto gate = [&](Tape::NodeId gin, Param& w, Param& b, const Tensor2* force,
                      int cols) {
        if (force) {
          if (force->rows != m || force->cols != cols)
            fail(ErrorKind::dimension, "fusion_forward: forced gate shape mismatch");
          return tape.input(*force);
        }
        return tape.sigmoid(head(gin, w, b));
      };
      out.gate_v_verb = gate(gin_v, model.gate_v_verb_w, model.gate_v_verb_b,
                             force_gate_v, nv);
      out.gate_a_verb = gate(gin_a, model.gate_a_verb_w, model.gate_a_verb_b,
                             force_gate_a, nv);
      auto sv = tape.row_softmax(out.v_verb);
      auto sa = tape.row_softmax(out.a_verb);
      out.final_verb = tape.add(tape.mul(sv, out.gate_v_verb),
                                tape.mul(sa, out.gate_a_verb));
      if (vn) {
        int nn = model.n_nouns + 1;
        out.v_noun = head(hv, model.head_v_noun_w, model.head_v_noun_b);
        out.a_noun = head(ha, model.head_a_noun_w, model.head_a_noun_b);
        Tape::NodeId wv_n, wa_n;
        if (force_gate_v) {
          wv_n = tape.input(constant_gate(m, nn, force_gate_v->at(0, 0)));
        } else {
          wv_n = tape.sigmoid(head(gin_v, model.gate_v_noun_w, model.gate_v_noun_b));
        }
        if (force_gate_a) {
          wa_n = tape.input(constant_gate(m, nn, force_gate_a->at(0, 0)));
        } else {
          wa_n = tape.sigmoid(head(gin_a, model.gate_a_noun_w, model.gate_a_noun_b));
        }
        auto svn = tape.row_softmax(out.v_noun);
        auto san = tape.row_softmax(out.a_noun);
        out.final_noun = tape.add(tape.mul(svn, wv_n), tape.mul(san, wa_n));
      }
      break;
    }
  }
  return out;
}

TrainCurve train_fusion(FusionModel& model, const std::vector<OwlTrainInput>& data,
                        const Taxonomy& tax, const FusionConfig& cfg) {
  if (data.empty()) fail(ErrorKind::data, "train_fusion: no videos");
  if (!(cfg.lr > 0.0)) fail(ErrorKind::config, "train_fusion: lr must be > 0");
  validate_supervision(cfg);

  struct Prepared {
    std::vector<ProposalToken> tokens;
    std::vector<int> verb_targets, noun_targets;
  };
  std::vector<Prepared> prepared;
  for (const OwlTrainInput& d : data) {
    if (d.proposals.empty())
      fail(ErrorKind::data, "train_fusion: empty proposal set for " + d.video->video_id);
    Prepared p;
    p.tokens = build_tokens(d.proposals, *d.video);
    auto labels = assign_labels(p.tokens, d.video->segments, cfg.theta_pos, tax);
    for (const LabelPair& l : labels) {
      p.verb_targets.push_back(l.verb);
      p.noun_targets.push_back(l.noun);
    }
    prepared.push_back(std::move(p));
  }

  auto params = model.params();
  Rng rng(Rng::mix(cfg.seed, 0xf0510000));
  std::vector<int> order(prepared.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  bool vn = tax.mode == TaxonomyMode::verb_noun;
  TrainCurve curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    double total = 0.0;
    for (int idx : order) {
      Prepared& p = prepared[idx];
      Tape tape;
      FusionForward fwd = fusion_forward(tape, model, p.tokens);
      Tape::NodeId loss = -1;
      auto accumulate = [&](Tape::NodeId term) {
        loss = loss < 0 ? term : tape.add(loss, term);
      };
      auto ce_pair = [&](Tape::NodeId verb, Tape::NodeId noun) {
        accumulate(tape.cross_entropy(verb, p.verb_targets));
        if (vn && noun >= 0) accumulate(tape.cross_entropy(noun, p.noun_targets));
      };
      if (model.cfg.strategy == FusionStrategy::intermediate) {
        if (cfg.sup_av) ce_pair(fwd.final_verb, fwd.final_noun);
        if (cfg.sup_v) ce_pair(fwd.v_verb, fwd.v_noun);
        if (cfg.sup_a) ce_pair(fwd.a_verb, fwd.a_noun);
      } else if (is_late(model.cfg.strategy)) {
        ce_pair(fwd.v_verb, fwd.v_noun);
        ce_pair(fwd.a_verb, fwd.a_noun);
        ce_pair(fwd.final_verb, fwd.final_noun);
      } else {
        ce_pair(fwd.final_verb, fwd.final_noun);
      }
      double lv = tape.value(loss).at(0, 0);
      if (!std::isfinite(lv)) fail(ErrorKind::numeric, "train_fusion: non-finite loss");
      total += lv;
      tape.backward(loss);
      sgd_step(params, cfg.lr);
      zero_grads(params);
    }
    curve.epoch_loss.push_back(total / static_cast<double>(prepared.size()));
  }
  return curve;
}

TokenPosteriors fusion_posteriors(const FusionModel& model,
                                  const std::vector<ProposalToken>& tokens) {
  Tape tape;
  FusionModel& m = const_cast<FusionModel&>(model);
  FusionForward fwd = fusion_forward(tape, m, tokens);
  TokenPosteriors post;
  post.verb = row_softmax_plain(tape.value(fwd.final_verb));
  if (fwd.final_noun >= 0) post.noun = row_softmax_plain(tape.value(fwd.final_noun));
  return post;
}

std::vector<Detection> detect_fusion(const FusionModel& model,
                                     const std::vector<Proposal>& proposals,
                                     const AnnotatedVideo& video, const Taxonomy& tax) {
  if (proposals.empty()) return {};
  auto tokens = build_tokens(proposals, video);
  TokenPosteriors post = fusion_posteriors(model, tokens);
  return assemble_detections(post, tokens, tax, model.cfg.top_actions);
}

void save_fusion_model(const std::string& path, const FusionModel& model,
                       const std::string& meta_json) {
  json cfg = {{"kind", "fusion"},
              {"strategy", to_string(model.cfg.strategy)},
              {"hidden", model.cfg.hidden},
              {"sup_v", model.cfg.sup_v},
              {"sup_a", model.cfg.sup_a},
              {"sup_av", model.cfg.sup_av},
              {"lr", model.cfg.lr},
              {"epochs", model.cfg.epochs},
              {"seed", model.cfg.seed},
              {"theta_pos", model.cfg.theta_pos},
              {"top_actions", model.cfg.top_actions},
              {"mode", model.mode == TaxonomyMode::verb_noun ? "verb_noun" : "single_action"},
              {"n_verbs", model.n_verbs},
              {"n_nouns", model.n_nouns},
              {"d_visual", model.d_visual},
              {"d_audio", model.d_audio}};
  if (!meta_json.empty()) cfg["meta"] = json::parse(meta_json);
  FusionModel& m = const_cast<FusionModel&>(model);
  write_checkpoint(path, cfg.dump(), m.params());
}

FusionModel load_fusion_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  json cfg = json::parse(ck.config_json, nullptr, false);
  if (cfg.is_discarded() || cfg.value("kind", "") != "fusion")
    fail(ErrorKind::parse, path + ": not a fusion checkpoint");
  FusionConfig fc;
  Taxonomy tax;
  int d_v = 0, d_a = 0;
  try {
    fc.strategy = fusion_strategy_from_string(cfg.at("strategy").get<std::string>());
    fc.hidden = cfg.at("hidden").get<int>();
    fc.sup_v = cfg.at("sup_v").get<bool>();
    fc.sup_a = cfg.at("sup_a").get<bool>();
    fc.sup_av = cfg.at("sup_av").get<bool>();
    fc.lr = cfg.at("lr").get<double>();
    fc.epochs = cfg.at("epochs").get<int>();
    fc.seed = cfg.at("seed").get<uint64_t>();
    fc.theta_pos = cfg.at("theta_pos").get<double>();
    fc.top_actions = cfg.at("top_actions").get<int>();
    tax.mode = cfg.at("mode").get<std::string>() == "verb_noun"
                   ? TaxonomyMode::verb_noun
                   : TaxonomyMode::single_action;
    tax.n_verbs = cfg.at("n_verbs").get<int>();
    tax.n_nouns = cfg.at("n_nouns").get<int>();
    d_v = cfg.at("d_visual").get<int>();
    d_a = cfg.at("d_audio").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, path + ": bad config block: " + e.what());
  }
  if (tax.mode == TaxonomyMode::verb_noun)
    for (int v = 0; v < tax.n_verbs; ++v) tax.valid_actions.push_back({v, v});
  Rng rng(0);
  FusionModel model = make_fusion_model(fc, tax, d_v, d_a, rng);
  {
    auto dst = model.params();
    if (dst.size() != ck.params.size())
      fail(ErrorKind::parse, path + ": checkpoint param count mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
      if (dst[i]->id != ck.params[i].id ||
          !dst[i]->value.same_shape(ck.params[i].value))
        fail(ErrorKind::parse, path + ": param mismatch at index " + std::to_string(i));
      dst[i]->value = ck.params[i].value;
    }
  }
  return model;
}

ModalityGrid modality_grid(const std::vector<AnnotatedVideo>& corpus,
                           const Taxonomy& tax, const std::vector<uint64_t>& seeds,
                           TemConfig tem_cfg, const ProposalConfig& prop_cfg,
                           FusionConfig fusion_cfg, const EvalConfig& eval_cfg) {
  if (corpus.empty()) fail(ErrorKind::data, "modality_grid: empty corpus");
  if (seeds.empty()) fail(ErrorKind::config, "modality_grid: no seeds");

  ModalityGrid grid;
  grid.gen_labels = {"G-A", "G-V", "G-AV"};
  grid.cls_labels = {"C-A", "C-V", "C-AV"};
  const TemModality gen_mods[3] = {TemModality::audio, TemModality::visual,
                                   TemModality::audiovisual};
  const FusionStrategy cls_mods[3] = {FusionStrategy::audio_only,
                                      FusionStrategy::visual_only,
                                      FusionStrategy::early};

  std::vector<const AnnotatedVideo*> video_ptrs;
  for (const AnnotatedVideo& v : corpus) video_ptrs.push_back(&v);

  for (uint64_t seed : seeds) {
    Tensor2 cell(3, 3);
    for (int g = 0; g < 3; ++g) {
      TemConfig tc = tem_cfg;
      tc.modality = gen_mods[g];
      tc.seed = seed;
      Rng trng(Rng::mix(seed, 0x9e400010 + static_cast<uint64_t>(g)));
      TemModel tem = make_tem_model(tc, tem_input_dim(corpus[0], tc.modality), trng);
      train_tem(tem, corpus, tc);
      std::vector<std::vector<Proposal>> proposals;
      std::vector<OwlTrainInput> data;
      for (const AnnotatedVideo& v : corpus) {
        WindowPlan plan = plan_windows(v.visual.len, tc.window, tc.stride);
        proposals.push_back(generate_proposals(tem, v, plan, prop_cfg));
      }
      for (size_t vi = 0; vi < corpus.size(); ++vi)
        data.push_back({&corpus[vi], proposals[vi]});
      for (int c = 0; c < 3; ++c) {
        FusionConfig fc = fusion_cfg;
        fc.strategy = cls_mods[c];
        fc.sup_v = fc.sup_a = false;
        fc.sup_av = true;
        fc.seed = seed;
        Rng frng(Rng::mix(seed, 0xc1a55000 + static_cast<uint64_t>(c)));
        FusionModel model = make_fusion_model(fc, tax, corpus[0].visual.dim,
                                              corpus[0].audio.dim, frng);
        train_fusion(model, data, tax, fc);
        std::vector<std::vector<Detection>> dets;
        for (size_t vi = 0; vi < corpus.size(); ++vi)
          dets.push_back(detect_fusion(model, proposals[vi], corpus[vi], tax));
        EvalReport report = evaluate(dets, video_ptrs, tax, eval_cfg);
        cell.at(g, c) = report.tasks.at("action").average_map;
      }
    }
    grid.per_seed.push_back(cell);
  }
  grid.mean = Tensor2(3, 3);
  for (const Tensor2& cell : grid.per_seed)
    for (size_t k = 0; k < cell.data.size(); ++k) grid.mean.data[k] += cell.data[k];
  for (double& v : grid.mean.data) v /= static_cast<double>(grid.per_seed.size());
  return grid;
}

}  // namespace owl
