#include "owl/owl_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "owl/binio.hpp"
#include "owl/evaltal.hpp"

namespace owl {

using nlohmann::json;

std::vector<ProposalToken> build_tokens(const std::vector<Proposal>& proposals,
                                        const AnnotatedVideo& video) {
  std::vector<ProposalToken> tokens;
  tokens.reserve(proposals.size());
  for (const Proposal& p : proposals) {
    if (p.t_s < 0.0 || p.t_e > video.duration + 1e-9 || !(p.t_s < p.t_e))
      fail(ErrorKind::segment, "build_tokens: proposal [" + std::to_string(p.t_s) +
                                   "," + std::to_string(p.t_e) + "] outside video " +
                                   video.video_id);
    ProposalToken tok;
    tok.z_v = pool_proposal_features(video.visual, p.t_s, p.t_e);
    tok.z_a = pool_proposal_features(video.audio, p.t_s, p.t_e);
    tok.pos = positional_input(p.t_s, p.t_e, video.duration);
    tok.t_s = p.t_s;
    tok.t_e = p.t_e;
    tok.gen_score = p.score;
    tokens.push_back(std::move(tok));
  }
  std::sort(tokens.begin(), tokens.end(),
            [](const ProposalToken& a, const ProposalToken& b) {
              if (a.t_s != b.t_s) return a.t_s < b.t_s;
              if (a.t_e != b.t_e) return a.t_e < b.t_e;
              return a.gen_score > b.gen_score;
            });
  return tokens;
}

AttentionMask banded_attention_mask(int m, int window) {
  if (m < 1) fail(ErrorKind::config, "banded_attention_mask: need at least one token");
  if (window < 0 || window % 2 != 0)
    fail(ErrorKind::config, "banded_attention_mask: window must be even and >= 0, got " +
                                std::to_string(window));
  AttentionMask mask;
  mask.rows = m;
  mask.cols = m;
  mask.window = window;
  mask.allow.assign(static_cast<size_t>(m) * m, 0);
  int half = window / 2;
  for (int i = 0; i < m; ++i)
    for (int j = std::max(0, i - half); j <= std::min(m - 1, i + half); ++j)
      mask.set(i, j, true);
  return mask;
}

std::vector<Param*> OwlModel::params() {
  std::vector<Param*> out = {&pos_w, &pos_b, &in_v_w, &in_v_b, &in_a_w, &in_a_b};
  auto add_attn = [&out](AttnParams& a) {
    for (auto& p : a.wq) out.push_back(&p);
    for (auto& p : a.wk) out.push_back(&p);
    for (auto& p : a.wv) out.push_back(&p);
    out.push_back(&a.wo);
    out.push_back(&a.bo);
    out.push_back(&a.ln_g);
    out.push_back(&a.ln_b);
  };
  auto add_ffn = [&out](FfnParams& f) {
    out.push_back(&f.w1);
    out.push_back(&f.b1);
    out.push_back(&f.w2);
    out.push_back(&f.b2);
    out.push_back(&f.ln_g);
    out.push_back(&f.ln_b);
  };
  add_attn(enc_self);
  add_ffn(enc_ffn);
  add_attn(dec_self);
  add_attn(dec_cross);
  add_ffn(dec_ffn);
  out.push_back(&verb_w);
  out.push_back(&verb_b);
  if (mode == TaxonomyMode::verb_noun) {
    out.push_back(&noun_w);
    out.push_back(&noun_b);
  }
  return out;
}

namespace {

Tensor2 xavier(Rng& rng, int rows, int cols) {
  Tensor2 t(rows, cols);
  double bound = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

AttnParams make_attn(const std::string& name, int d_model, int heads, Rng& rng) {
  AttnParams a;
  int d_head = d_model / heads;
  for (int h = 0; h < heads; ++h) {
    a.wq.emplace_back(name + ".wq" + std::to_string(h), xavier(rng, d_model, d_head));
    a.wk.emplace_back(name + ".wk" + std::to_string(h), xavier(rng, d_model, d_head));
    a.wv.emplace_back(name + ".wv" + std::to_string(h), xavier(rng, d_model, d_head));
  }
  a.wo = Param(name + ".wo", xavier(rng, d_model, d_model));
  a.bo = Param(name + ".bo", Tensor2(1, d_model));
  a.ln_g = Param(name + ".ln_g", Tensor2(1, d_model, 1.0));
  a.ln_b = Param(name + ".ln_b", Tensor2(1, d_model));
  return a;
}

FfnParams make_ffn(const std::string& name, int d_model, int ff_dim, Rng& rng) {
  FfnParams f;
  f.w1 = Param(name + ".w1", xavier(rng, d_model, ff_dim));
  f.b1 = Param(name + ".b1", Tensor2(1, ff_dim));
  f.w2 = Param(name + ".w2", xavier(rng, ff_dim, d_model));
  f.b2 = Param(name + ".b2", Tensor2(1, d_model));
  f.ln_g = Param(name + ".ln_g", Tensor2(1, d_model, 1.0));
  f.ln_b = Param(name + ".ln_b", Tensor2(1, d_model));
  return f;
}

Tape::NodeId ffn_block(Tape& tape, Tape::NodeId x, FfnParams& f) {
  auto h = tape.relu(tape.linear(x, tape.param(f.w1), tape.param(f.b1)));
  auto o = tape.linear(h, tape.param(f.w2), tape.param(f.b2));
  return tape.layer_norm(tape.add(x, o), tape.param(f.ln_g), tape.param(f.ln_b));
}

}  // namespace

OwlModel make_owl_model(const OwlConfig& cfg, const Taxonomy& tax, int d_visual,
                        int d_audio, Rng& rng) {
  if (cfg.d_model % cfg.heads != 0)
    fail(ErrorKind::config, "owl: heads (" + std::to_string(cfg.heads) +
                                ") must divide d_model (" + std::to_string(cfg.d_model) + ")");
  if (cfg.pos_dim < 1 || cfg.ff_dim < 1 || d_visual < 1 || d_audio < 1)
    fail(ErrorKind::config, "owl: bad dimensions");
  if (!(cfg.theta_pos > 0.0 && cfg.theta_pos < 1.0))
    fail(ErrorKind::config, "owl: theta_pos must be in (0,1)");
  OwlModel m;
  m.cfg = cfg;
  m.mode = tax.mode;
  m.n_verbs = tax.n_verbs;
  m.n_nouns = tax.n_nouns;
  m.d_visual = d_visual;
  m.d_audio = d_audio;
  m.pos_w = Param("pos.w", xavier(rng, 2, cfg.pos_dim));
  m.pos_b = Param("pos.b", Tensor2(1, cfg.pos_dim));
  m.in_v_w = Param("in_v.w", xavier(rng, d_visual + cfg.pos_dim, cfg.d_model));
  m.in_v_b = Param("in_v.b", Tensor2(1, cfg.d_model));
  m.in_a_w = Param("in_a.w", xavier(rng, d_audio + cfg.pos_dim, cfg.d_model));
  m.in_a_b = Param("in_a.b", Tensor2(1, cfg.d_model));
  m.enc_self = make_attn("enc.self", cfg.d_model, cfg.heads, rng);
  m.enc_ffn = make_ffn("enc.ffn", cfg.d_model, cfg.ff_dim, rng);
  m.dec_self = make_attn("dec.self", cfg.d_model, cfg.heads, rng);
  m.dec_cross = make_attn("dec.cross", cfg.d_model, cfg.heads, rng);
  m.dec_ffn = make_ffn("dec.ffn", cfg.d_model, cfg.ff_dim, rng);
  m.verb_w = Param("head.verb_w", xavier(rng, cfg.d_model, tax.n_verbs + 1));
  m.verb_b = Param("head.verb_b", Tensor2(1, tax.n_verbs + 1));
  if (tax.mode == TaxonomyMode::verb_noun) {
    m.noun_w = Param("head.noun_w", xavier(rng, cfg.d_model, tax.n_nouns + 1));
    m.noun_b = Param("head.noun_b", Tensor2(1, tax.n_nouns + 1));
  }
  return m;
}

Tape::NodeId attention_block(Tape& tape, Tape::NodeId xq, Tape::NodeId xkv,
                             const AttentionMask& mask, int heads, AttnParams& p) {
  const Tensor2& xqv = tape.value(xq);
  if (mask.rows != xqv.rows || mask.cols != tape.value(xkv).rows)
    fail(ErrorKind::dimension, "attention_block: mask " + std::to_string(mask.rows) +
                                   "x" + std::to_string(mask.cols) +
                                   " does not match token counts");
  if (static_cast<int>(p.wq.size()) != heads)
    fail(ErrorKind::config, "attention_block: head count mismatch");
  int d_head = tape.value(xq).cols / heads;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_head));
  Tape::NodeId heads_out = -1;
  for (int h = 0; h < heads; ++h) {
    auto q = tape.matmul(xq, tape.param(p.wq[h]));
    auto k = tape.matmul(xkv, tape.param(p.wk[h]));
    auto v = tape.matmul(xkv, tape.param(p.wv[h]));
    auto scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_scale);
    auto attn = tape.masked_row_softmax(scores, mask);
    auto out = tape.matmul(attn, v);
    heads_out = h == 0 ? out : tape.concat_cols(heads_out, out);
  }
  auto proj = tape.linear(heads_out, tape.param(p.wo), tape.param(p.bo));
  return tape.layer_norm(tape.add(xq, proj), tape.param(p.ln_g), tape.param(p.ln_b));
}

namespace {

void check_sorted(const std::vector<ProposalToken>& tokens) {
  for (size_t i = 1; i < tokens.size(); ++i) {
    const ProposalToken &a = tokens[i - 1], &b = tokens[i];
    bool ok = a.t_s < b.t_s ||
              (a.t_s == b.t_s &&
               (a.t_e < b.t_e || (a.t_e == b.t_e && a.gen_score >= b.gen_score)));
    if (!ok) fail(ErrorKind::ordering, "owl_forward: tokens not sorted by (t_s, t_e, -score)");
  }
}

Tensor2 stack_features(const std::vector<ProposalToken>& tokens, bool visual) {
  int m = static_cast<int>(tokens.size());
  int d = static_cast<int>(visual ? tokens[0].z_v.size() : tokens[0].z_a.size());
  Tensor2 x(m, d);
  for (int i = 0; i < m; ++i) {
    const auto& z = visual ? tokens[i].z_v : tokens[i].z_a;
    if (static_cast<int>(z.size()) != d)
      fail(ErrorKind::dimension, "owl_forward: inconsistent token feature dims");
    for (int j = 0; j < d; ++j) x.at(i, j) = z[j];
  }
  return x;
}

Tensor2 stack_positions(const std::vector<ProposalToken>& tokens) {
  int m = static_cast<int>(tokens.size());
  Tensor2 p(m, 2);
  for (int i = 0; i < m; ++i) {
    p.at(i, 0) = tokens[i].pos.p_r;
    p.at(i, 1) = tokens[i].pos.p_d;
  }
  return p;
}

}  // namespace

OwlForward owl_forward(Tape& tape, OwlModel& model,
                       const std::vector<ProposalToken>& tokens,
                       const AttentionMask& mask) {
  if (tokens.empty()) fail(ErrorKind::data, "owl_forward: no tokens");
  check_sorted(tokens);
  int m = static_cast<int>(tokens.size());
  if (mask.rows != m || mask.cols != m)
    fail(ErrorKind::dimension, "owl_forward: mask must be " + std::to_string(m) + "x" +
                                   std::to_string(m));

  auto pos = tape.linear(tape.input(stack_positions(tokens)), tape.param(model.pos_w),
                         tape.param(model.pos_b));

  auto xa = tape.linear(tape.concat_cols(tape.input(stack_features(tokens, false)), pos),
                        tape.param(model.in_a_w), tape.param(model.in_a_b));
  xa = attention_block(tape, xa, xa, mask, model.cfg.heads, model.enc_self);
  xa = ffn_block(tape, xa, model.enc_ffn);

  auto xv = tape.linear(tape.concat_cols(tape.input(stack_features(tokens, true)), pos),
                        tape.param(model.in_v_w), tape.param(model.in_v_b));
  xv = attention_block(tape, xv, xv, mask, model.cfg.heads, model.dec_self);
  xv = attention_block(tape, xv, xa, mask, model.cfg.heads, model.dec_cross);
  xv = ffn_block(tape, xv, model.dec_ffn);

  OwlForward out;
  out.verb_logits = tape.linear(xv, tape.param(model.verb_w), tape.param(model.verb_b));
  if (model.mode == TaxonomyMode::verb_noun)
    out.noun_logits = tape.linear(xv, tape.param(model.noun_w), tape.param(model.noun_b));
  return out;
}

std::vector<LabelPair> assign_labels(const std::vector<ProposalToken>& tokens,
                                     const std::vector<GtSegment>& gts,
                                     double theta_pos, const Taxonomy& tax) {
  if (!(theta_pos > 0.0 && theta_pos < 1.0))
    fail(ErrorKind::config, "assign_labels: theta_pos must be in (0,1)");
  std::vector<LabelPair> labels;
  labels.reserve(tokens.size());
  for (const ProposalToken& tok : tokens) {
    int best = -1;
    double best_ov = 0.0;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      double ov = tiou(tok.t_s, tok.t_e, gts[gi].t_s, gts[gi].t_e);
      bool better = ov > best_ov;
      if (ov == best_ov && best >= 0) {
        const GtSegment &g = gts[gi], &bg = gts[best];
        better = g.t_s < bg.t_s || (g.t_s == bg.t_s && g.t_e < bg.t_e);
      }
      if (best < 0 && ov > 0.0) better = true;
      if (better) {
        best = static_cast<int>(gi);
        best_ov = ov;
      }
    }
    if (best >= 0 && best_ov >= theta_pos) {
      labels.push_back({gts[best].verb,
                        tax.mode == TaxonomyMode::verb_noun ? gts[best].noun : 0});
    } else {
      labels.push_back({tax.n_verbs, tax.n_nouns});
    }
  }
  return labels;
}

TrainCurve train_owl(OwlModel& model, const std::vector<OwlTrainInput>& data,
                     const Taxonomy& tax, const OwlConfig& cfg) {
  if (data.empty()) fail(ErrorKind::data, "train_owl: no videos");
  if (!(cfg.lr > 0.0)) fail(ErrorKind::config, "train_owl: lr must be > 0");

  struct Prepared {
    std::vector<ProposalToken> tokens;
    std::vector<int> verb_targets, noun_targets;
    AttentionMask mask;
  };
  std::vector<Prepared> prepared;
  for (const OwlTrainInput& d : data) {
    if (d.proposals.empty())
      fail(ErrorKind::data, "train_owl: empty proposal set for " + d.video->video_id);
    Prepared p;
    p.tokens = build_tokens(d.proposals, *d.video);
    auto labels = assign_labels(p.tokens, d.video->segments, cfg.theta_pos, tax);
    for (const LabelPair& l : labels) {
      p.verb_targets.push_back(l.verb);
      p.noun_targets.push_back(l.noun);
    }
    p.mask = banded_attention_mask(static_cast<int>(p.tokens.size()), cfg.window);
    prepared.push_back(std::move(p));
  }

  auto params = model.params();
  Rng rng(Rng::mix(cfg.seed, 0x0113a7e5));
  std::vector<int> order(prepared.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainCurve curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    double total = 0.0;
    for (int idx : order) {
      Prepared& p = prepared[idx];
      Tape tape;
      OwlForward fwd = owl_forward(tape, model, p.tokens, p.mask);
      auto loss = tape.cross_entropy(fwd.verb_logits, p.verb_targets);
      if (fwd.noun_logits >= 0)
        loss = tape.add(loss, tape.cross_entropy(fwd.noun_logits, p.noun_targets));
      double lv = tape.value(loss).at(0, 0);
      if (!std::isfinite(lv)) fail(ErrorKind::numeric, "train_owl: non-finite loss");
      total += lv;
      tape.backward(loss);
      sgd_step(params, cfg.lr);
      zero_grads(params);
    }
    curve.epoch_loss.push_back(total / static_cast<double>(prepared.size()));
  }
  return curve;
}

TokenPosteriors owl_posteriors(const OwlModel& model,
                               const std::vector<ProposalToken>& tokens) {
  Tape tape;
  OwlModel& m = const_cast<OwlModel&>(model);
  AttentionMask mask = banded_attention_mask(static_cast<int>(tokens.size()),
                                             model.cfg.window);
  OwlForward fwd = owl_forward(tape, m, tokens, mask);
  TokenPosteriors post;
  post.verb = row_softmax_plain(tape.value(fwd.verb_logits));
  if (fwd.noun_logits >= 0) post.noun = row_softmax_plain(tape.value(fwd.noun_logits));
  return post;
}

std::vector<Detection> assemble_detections(const TokenPosteriors& post,
                                           const std::vector<ProposalToken>& tokens,
                                           const Taxonomy& tax, int top_actions) {
  if (top_actions < 1) fail(ErrorKind::config, "assemble_detections: top_actions >= 1");
  std::vector<Detection> out;
  int m = static_cast<int>(tokens.size());
  for (int i = 0; i < m; ++i) {
    std::vector<Detection> cands;
    if (tax.mode == TaxonomyMode::verb_noun) {
      for (const auto& [v, n] : tax.valid_actions) {
        double s = post.verb.at(i, v) * post.noun.at(i, n) * tokens[i].gen_score;
        cands.push_back({tokens[i].t_s, tokens[i].t_e, v, n, s});
      }
    } else {
      for (int v = 0; v < tax.n_verbs; ++v) {
        double s = post.verb.at(i, v) * tokens[i].gen_score;
        cands.push_back({tokens[i].t_s, tokens[i].t_e, v, -1, s});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.verb != b.verb) return a.verb < b.verb;
      return a.noun < b.noun;
    });
    if (static_cast<int>(cands.size()) > top_actions) cands.resize(top_actions);
    out.insert(out.end(), cands.begin(), cands.end());
  }
  return out;
}

std::vector<Detection> detect(const OwlModel& model,
                              const std::vector<Proposal>& proposals,
                              const AnnotatedVideo& video, const Taxonomy& tax) {
  if (proposals.empty()) return {};
  auto tokens = build_tokens(proposals, video);
  TokenPosteriors post = owl_posteriors(model, tokens);
  return assemble_detections(post, tokens, tax, model.cfg.top_actions);
}

// -------------------------------------------------------------------------
// Checkpoints
// -------------------------------------------------------------------------

void write_checkpoint(const std::string& path, const std::string& config_json,
                      const std::vector<Param*>& params) {
  std::string out;
  out += "OWLM";
  binio::put_u32(out, 1);
  binio::put_u32(out, static_cast<uint32_t>(config_json.size()));
  out += config_json;
  binio::put_u32(out, static_cast<uint32_t>(params.size()));
  for (const Param* p : params) {
    binio::put_u32(out, static_cast<uint32_t>(p->id.size()));
    out += p->id;
    binio::put_u32(out, static_cast<uint32_t>(p->value.rows));
    binio::put_u32(out, static_cast<uint32_t>(p->value.cols));
    for (double v : p->value.data) binio::put_f64(out, v);
  }
  binio::write_file_bytes(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::string buf = binio::read_file_bytes(path);
  binio::Cursor c{buf};
  c.need(4, "magic");
  if (buf.compare(0, 4, "OWLM") != 0)
    fail(ErrorKind::parse, "parse error at byte 0: bad magic (expected OWLM)");
  c.pos = 4;
  uint32_t version = c.u32("version");
  if (version != 1)
    fail(ErrorKind::parse, "unsupported checkpoint version " + std::to_string(version));
  uint32_t json_len = c.u32("config length");
  Checkpoint ck;
  ck.config_json = c.bytes(json_len, "config block");
  uint32_t count = c.u32("param count");
  for (uint32_t k = 0; k < count; ++k) {
    uint32_t id_len = c.u32("param id length");
    std::string id = c.bytes(id_len, "param id");
    uint32_t rows = c.u32("param rows");
    uint32_t cols = c.u32("param cols");
    Tensor2 t(static_cast<int>(rows), static_cast<int>(cols));
    for (double& v : t.data) v = c.f64("param data");
    ck.params.emplace_back(id, std::move(t));
  }
  if (c.pos != buf.size())
    fail(ErrorKind::parse, "parse error at byte " + std::to_string(c.pos) +
                               ": trailing bytes after parameters");
  return ck;
}

namespace {

void restore_params(std::vector<Param*> dst, const std::vector<Param>& src,
                    const std::string& path) {
  if (dst.size() != src.size())
    fail(ErrorKind::parse, path + ": checkpoint has " + std::to_string(src.size()) +
                               " params, model expects " + std::to_string(dst.size()));
  for (size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->id != src[i].id || !dst[i]->value.same_shape(src[i].value))
      fail(ErrorKind::parse, path + ": param " + std::to_string(i) + " mismatch (" +
                                 src[i].id + " vs " + dst[i]->id + ")");
    dst[i]->value = src[i].value;
  }
}

}  // namespace

void save_owl_model(const std::string& path, const OwlModel& model,
                    const std::string& meta_json) {
  json cfg = {{"kind", "owl"},
              {"d_model", model.cfg.d_model},
              {"heads", model.cfg.heads},
              {"pos_dim", model.cfg.pos_dim},
              {"ff_dim", model.cfg.ff_dim},
              {"window", model.cfg.window},
              {"theta_pos", model.cfg.theta_pos},
              {"lr", model.cfg.lr},
              {"epochs", model.cfg.epochs},
              {"seed", model.cfg.seed},
              {"top_actions", model.cfg.top_actions},
              {"mode", model.mode == TaxonomyMode::verb_noun ? "verb_noun" : "single_action"},
              {"n_verbs", model.n_verbs},
              {"n_nouns", model.n_nouns},
              {"d_visual", model.d_visual},
              {"d_audio", model.d_audio}};
  if (!meta_json.empty()) cfg["meta"] = json::parse(meta_json);
  OwlModel& m = const_cast<OwlModel&>(model);
  write_checkpoint(path, cfg.dump(), m.params());
}

OwlModel load_owl_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  json cfg = json::parse(ck.config_json, nullptr, false);
  if (cfg.is_discarded() || cfg.value("kind", "") != "owl")
    fail(ErrorKind::parse, path + ": not an owl checkpoint");
  OwlConfig oc;
  Taxonomy tax;
  int d_v = 0, d_a = 0;
  try {
    oc.d_model = cfg.at("d_model").get<int>();
    oc.heads = cfg.at("heads").get<int>();
    oc.pos_dim = cfg.at("pos_dim").get<int>();
    oc.ff_dim = cfg.at("ff_dim").get<int>();
    oc.window = cfg.at("window").get<int>();
    oc.theta_pos = cfg.at("theta_pos").get<double>();
    oc.lr = cfg.at("lr").get<double>();
    oc.epochs = cfg.at("epochs").get<int>();
    oc.seed = cfg.at("seed").get<uint64_t>();
    oc.top_actions = cfg.at("top_actions").get<int>();
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
  OwlModel model = make_owl_model(oc, tax, d_v, d_a, rng);
  restore_params(model.params(), ck.params, path);
  return model;
}

void save_tem_model(const std::string& path, const TemModel& model,
                    const std::string& meta_json) {
  json cfg = {{"kind", "tem"},
              {"modality", to_string(model.cfg.modality)},
              {"window", model.cfg.window},
              {"stride", model.cfg.stride},
              {"hidden", model.cfg.hidden},
              {"lr", model.cfg.lr},
              {"epochs", model.cfg.epochs},
              {"seed", model.cfg.seed},
              {"input_dim", model.input_dim}};
  if (!meta_json.empty()) cfg["meta"] = json::parse(meta_json);
  TemModel& m = const_cast<TemModel&>(model);
  write_checkpoint(path, cfg.dump(), m.params());
}

TemModel load_tem_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  json cfg = json::parse(ck.config_json, nullptr, false);
  if (cfg.is_discarded() || cfg.value("kind", "") != "tem")
    fail(ErrorKind::parse, path + ": not a tem checkpoint");
  TemConfig tc;
  int input_dim = 0;
  try {
    tc.modality = tem_modality_from_string(cfg.at("modality").get<std::string>());
    tc.window = cfg.at("window").get<int>();
    tc.stride = cfg.at("stride").get<int>();
    tc.hidden = cfg.at("hidden").get<int>();
    tc.lr = cfg.at("lr").get<double>();
    tc.epochs = cfg.at("epochs").get<int>();
    tc.seed = cfg.at("seed").get<uint64_t>();
    input_dim = cfg.at("input_dim").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, path + ": bad config block: " + e.what());
  }
  Rng rng(0);
  TemModel model = make_tem_model(tc, input_dim, rng);
  restore_params(model.params(), ck.params, path);
  return model;
}

void write_detections(const std::string& path, const std::string& video_id,
                      const std::vector<Detection>& dets, const std::string& meta_json) {
  json dlist = json::array();
  for (const Detection& d : dets)
    dlist.push_back({{"t_s", d.t_s},
                     {"t_e", d.t_e},
                     {"verb", d.verb},
                     {"noun", d.noun},
                     {"score", d.score}});
  json j = {{"video_id", video_id}, {"detections", dlist}};
  if (!meta_json.empty()) j["meta"] = json::parse(meta_json);
  binio::write_file_bytes(path, j.dump(2) + "\n");
}

std::pair<std::string, std::vector<Detection>> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::dependency, "missing detections file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::parse, "invalid JSON in " + path);
  std::string video_id;
  std::vector<Detection> dets;
  try {
    video_id = j.at("video_id").get<std::string>();
    for (const auto& d : j.at("detections")) {
      dets.push_back({d.at("t_s").get<double>(), d.at("t_e").get<double>(),
                      d.at("verb").get<int>(), d.at("noun").get<int>(),
                      d.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "bad detections in " + path + ": " + e.what());
  }
  return {video_id, dets};
}

}  // namespace owl
