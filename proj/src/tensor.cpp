#include "owl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace owl {

Tensor2::Tensor2(int r, int c, double fill) : rows(r), cols(c) {
  if (r < 0 || c < 0) fail(ErrorKind::dimension, "negative tensor shape");
  data.assign(static_cast<size_t>(r) * c, fill);
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rs) {
  Tensor2 t(static_cast<int>(rs.size()),
            rs.size() ? static_cast<int>(rs.begin()->size()) : 0);
  int i = 0;
  for (const auto& row : rs) {
    if (static_cast<int>(row.size()) != t.cols)
      fail(ErrorKind::dimension, "ragged initializer");
    int j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

bool Tensor2::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor2::shape_str() const {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

AttentionMask AttentionMask::all_allowed(int r, int c) {
  AttentionMask m;
  m.rows = r;
  m.cols = c;
  m.allow.assign(static_cast<size_t>(r) * c, 1);
  return m;
}

Tensor2 matmul_plain(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.rows)
    fail(ErrorKind::dimension,
         "matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
  Tensor2 y(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
    double* yrow = &y.data[static_cast<size_t>(i) * y.cols];
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) yrow[j] += aik * brow[j];
    }
  }
  return y;
}

Tensor2 transpose_plain(const Tensor2& a) {
  Tensor2 y(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) y.at(j, i) = a.at(i, j);
  return y;
}

Tensor2 masked_row_softmax_plain(const Tensor2& scores, const AttentionMask& mask) {
  if (mask.rows != scores.rows || mask.cols != scores.cols)
    fail(ErrorKind::dimension, "softmax mask shape " + std::to_string(mask.rows) +
                                   "x" + std::to_string(mask.cols) +
                                   " does not match scores " + scores.shape_str());
  Tensor2 y(scores.rows, scores.cols);
  for (int i = 0; i < scores.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < scores.cols; ++j)
      if (mask.at(i, j)) mx = std::max(mx, scores.at(i, j));
    if (mx == -std::numeric_limits<double>::infinity())
      fail(ErrorKind::mask, "fully masked softmax row " + std::to_string(i));
    double z = 0.0;
    for (int j = 0; j < scores.cols; ++j) {
      if (!mask.at(i, j)) continue;
      double e = std::exp(scores.at(i, j) - mx);
      y.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < scores.cols; ++j)
      if (mask.at(i, j)) y.at(i, j) /= z;
  }
  return y;
}

Tensor2 row_softmax_plain(const Tensor2& scores) {
  return masked_row_softmax_plain(scores,
                                  AttentionMask::all_allowed(scores.rows, scores.cols));
}

Tape::NodeId Tape::push(Tensor2 value, std::function<void(Tape&)> backprop) {
  Node n;
  n.grad = Tensor2(value.rows, value.cols);
  n.value = std::move(value);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    fail(ErrorKind::data, "invalid tape node id");
}

Tape::NodeId Tape::input(Tensor2 v) { return push(std::move(v), nullptr); }

Tape::NodeId Tape::param(Param& p) {
  Param* pp = &p;
  NodeId id = push(p.value, nullptr);
  nodes_[id].backprop = [id, pp](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    for (size_t k = 0; k < g.data.size(); ++k) pp->grad.data[k] += g.data[k];
  };
  return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  check(a);
  check(b);
  Tensor2 y = matmul_plain(nodes_[a].value, nodes_[b].value);
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a, b](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& av = t.nodes_[a].value;
    const Tensor2& bv = t.nodes_[b].value;
    // dA += G * B^T
    Tensor2& ga = t.nodes_[a].grad;
    for (int i = 0; i < av.rows; ++i)
      for (int k = 0; k < av.cols; ++k) {
        double s = 0.0;
        for (int j = 0; j < bv.cols; ++j) s += g.at(i, j) * bv.at(k, j);
        ga.at(i, k) += s;
      }
    // dB += A^T * G
    Tensor2& gb = t.nodes_[b].grad;
    for (int k = 0; k < bv.rows; ++k)
      for (int j = 0; j < bv.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < av.rows; ++i) s += av.at(i, k) * g.at(i, j);
        gb.at(k, j) += s;
      }
  };
  return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
  check(a);
  NodeId id = push(transpose_plain(nodes_[a].value), nullptr);
  nodes_[id].backprop = [id, a](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    Tensor2& ga = t.nodes_[a].grad;
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
  };
  return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Tensor2& av = nodes_[a].value;
  const Tensor2& bv = nodes_[b].value;
  if (!av.same_shape(bv))
    fail(ErrorKind::dimension,
         "add shape mismatch: " + av.shape_str() + " + " + bv.shape_str());
  Tensor2 y = av;
  for (size_t k = 0; k < y.data.size(); ++k) y.data[k] += bv.data[k];
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a, b](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    for (size_t k = 0; k < g.data.size(); ++k) {
      t.nodes_[a].grad.data[k] += g.data[k];
      t.nodes_[b].grad.data[k] += g.data[k];
    }
  };
  return id;
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  check(a);
  Tensor2 y = nodes_[a].value;
  for (double& v : y.data) v *= c;
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a, c](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    for (size_t k = 0; k < g.data.size(); ++k)
      t.nodes_[a].grad.data[k] += c * g.data[k];
  };
  return id;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Tensor2& av = nodes_[a].value;
  const Tensor2& bv = nodes_[b].value;
  if (!av.same_shape(bv))
    fail(ErrorKind::dimension,
         "mul shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor2 y = av;
  for (size_t k = 0; k < y.data.size(); ++k) y.data[k] *= bv.data[k];
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a, b](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& av2 = t.nodes_[a].value;
    const Tensor2& bv2 = t.nodes_[b].value;
    for (size_t k = 0; k < g.data.size(); ++k) {
      t.nodes_[a].grad.data[k] += g.data[k] * bv2.data[k];
      t.nodes_[b].grad.data[k] += g.data[k] * av2.data[k];
    }
  };
  return id;
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Tensor2& av = nodes_[a].value;
  const Tensor2& bv = nodes_[b].value;
  if (av.rows != bv.rows)
    fail(ErrorKind::dimension,
         "concat_cols row mismatch: " + av.shape_str() + " | " + bv.shape_str());
  Tensor2 y(av.rows, av.cols + bv.cols);
  for (int i = 0; i < av.rows; ++i) {
    for (int j = 0; j < av.cols; ++j) y.at(i, j) = av.at(i, j);
    for (int j = 0; j < bv.cols; ++j) y.at(i, av.cols + j) = bv.at(i, j);
  }
  int ac = av.cols, bc = bv.cols;
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a, b, ac, bc](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < ac; ++j) t.nodes_[a].grad.at(i, j) += g.at(i, j);
      for (int j = 0; j < bc; ++j) t.nodes_[b].grad.at(i, j) += g.at(i, ac + j);
    }
  };
  return id;
}

Tape::NodeId Tape::relu(NodeId a) {
  check(a);
  Tensor2 y = nodes_[a].value;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& x = t.nodes_[a].value;
    for (size_t k = 0; k < g.data.size(); ++k)
      if (x.data[k] > 0.0) t.nodes_[a].grad.data[k] += g.data[k];
  };
  return id;
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  check(a);
  Tensor2 y = nodes_[a].value;
  for (double& v : y.data) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, a](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& yv = t.nodes_[id].value;
    for (size_t k = 0; k < g.data.size(); ++k)
      t.nodes_[a].grad.data[k] += g.data[k] * yv.data[k] * (1.0 - yv.data[k]);
  };
  return id;
}

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  check(x);
  check(w);
  check(b);
  const Tensor2& xv = nodes_[x].value;
  const Tensor2& wv = nodes_[w].value;
  const Tensor2& bv = nodes_[b].value;
  if (xv.cols != wv.rows)
    fail(ErrorKind::dimension,
         "linear shape mismatch: x " + xv.shape_str() + " w " + wv.shape_str());
  if (bv.rows != 1 || bv.cols != wv.cols)
    fail(ErrorKind::dimension,
         "linear bias shape " + bv.shape_str() + " not broadcastable to 1x" +
             std::to_string(wv.cols));
  Tensor2 y = matmul_plain(xv, wv);
  for (int i = 0; i < y.rows; ++i)
    for (int j = 0; j < y.cols; ++j) y.at(i, j) += bv.at(0, j);
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, x, w, b](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& xv2 = t.nodes_[x].value;
    const Tensor2& wv2 = t.nodes_[w].value;
    Tensor2& gx = t.nodes_[x].grad;
    for (int i = 0; i < xv2.rows; ++i)
      for (int k = 0; k < xv2.cols; ++k) {
        double s = 0.0;
        for (int j = 0; j < wv2.cols; ++j) s += g.at(i, j) * wv2.at(k, j);
        gx.at(i, k) += s;
      }
    Tensor2& gw = t.nodes_[w].grad;
    for (int k = 0; k < wv2.rows; ++k)
      for (int j = 0; j < wv2.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < xv2.rows; ++i) s += xv2.at(i, k) * g.at(i, j);
        gw.at(k, j) += s;
      }
    Tensor2& gb = t.nodes_[b].grad;
    for (int j = 0; j < g.cols; ++j) {
      double s = 0.0;
      for (int i = 0; i < g.rows; ++i) s += g.at(i, j);
      gb.at(0, j) += s;
    }
  };
  return id;
}

Tape::NodeId Tape::masked_row_softmax(NodeId scores, AttentionMask mask) {
  check(scores);
  Tensor2 y = masked_row_softmax_plain(nodes_[scores].value, mask);
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, scores, mask = std::move(mask)](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& yv = t.nodes_[id].value;
    Tensor2& gs = t.nodes_[scores].grad;
    for (int i = 0; i < yv.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < yv.cols; ++j)
        if (mask.at(i, j)) dot += g.at(i, j) * yv.at(i, j);
      for (int j = 0; j < yv.cols; ++j)
        if (mask.at(i, j)) gs.at(i, j) += yv.at(i, j) * (g.at(i, j) - dot);
    }
  };
  return id;
}

Tape::NodeId Tape::row_softmax(NodeId scores) {
  const Tensor2& s = nodes_[scores].value;
  return masked_row_softmax(scores, AttentionMask::all_allowed(s.rows, s.cols));
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  check(x);
  check(gamma);
  check(beta);
  const Tensor2& xv = nodes_[x].value;
  const Tensor2& gv = nodes_[gamma].value;
  const Tensor2& bv = nodes_[beta].value;
  if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
    fail(ErrorKind::dimension, "layer_norm scale/shift must be 1x" +
                                   std::to_string(xv.cols) + ", got " +
                                   gv.shape_str() + " and " + bv.shape_str());
  int C = xv.cols;
  Tensor2 xhat(xv.rows, C);
  std::vector<double> inv_std(xv.rows);
  for (int i = 0; i < xv.rows; ++i) {
    double mu = 0.0;
    for (int j = 0; j < C; ++j) mu += xv.at(i, j);
    mu /= C;
    double var = 0.0;
    for (int j = 0; j < C; ++j) {
      double d = xv.at(i, j) - mu;
      var += d * d;
    }
    var /= C;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int j = 0; j < C; ++j) xhat.at(i, j) = (xv.at(i, j) - mu) * is;
  }
  Tensor2 y(xv.rows, C);
  for (int i = 0; i < xv.rows; ++i)
    for (int j = 0; j < C; ++j) y.at(i, j) = gv.at(0, j) * xhat.at(i, j) + bv.at(0, j);
  NodeId id = push(std::move(y), nullptr);
  nodes_[id].backprop = [id, x, gamma, beta, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](Tape& t) {
    const Tensor2& g = t.nodes_[id].grad;
    const Tensor2& gv2 = t.nodes_[gamma].value;
    int C = g.cols;
    Tensor2& ggamma = t.nodes_[gamma].grad;
    Tensor2& gbeta = t.nodes_[beta].grad;
    Tensor2& gx = t.nodes_[x].grad;
    for (int i = 0; i < g.rows; ++i) {
      double mean_gl = 0.0, mean_glx = 0.0;
      for (int j = 0; j < C; ++j) {
        double gl = g.at(i, j) * gv2.at(0, j);
        mean_gl += gl;
        mean_glx += gl * xhat.at(i, j);
        ggamma.at(0, j) += g.at(i, j) * xhat.at(i, j);
        gbeta.at(0, j) += g.at(i, j);
      }
      mean_gl /= C;
      mean_glx /= C;
      for (int j = 0; j < C; ++j) {
        double gl = g.at(i, j) * gv2.at(0, j);
        gx.at(i, j) += inv_std[i] * (gl - mean_gl - xhat.at(i, j) * mean_glx);
      }
    }
  };
  return id;
}

Tape::NodeId Tape::cross_entropy(NodeId logits, std::vector<int> targets) {
  check(logits);
  const Tensor2& lv = nodes_[logits].value;
  if (static_cast<int>(targets.size()) != lv.rows)
    fail(ErrorKind::label, "cross_entropy: " + std::to_string(targets.size()) +
                               " targets for " + std::to_string(lv.rows) + " rows");
  for (int t : targets)
    if (t < 0 || t >= lv.cols)
      fail(ErrorKind::label, "cross_entropy: target " + std::to_string(t) +
                                 " out of range [0," + std::to_string(lv.cols) + ")");
  Tensor2 probs = row_softmax_plain(lv);
  double loss = 0.0;
  for (int i = 0; i < lv.rows; ++i) {
    double mx = lv.at(i, 0);
    for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, lv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < lv.cols; ++j) z += std::exp(lv.at(i, j) - mx);
    loss += std::log(z) - (lv.at(i, targets[i]) - mx);
  }
  loss /= lv.rows;
  if (!std::isfinite(loss)) fail(ErrorKind::numeric, "cross_entropy: non-finite loss");
  NodeId id = push(Tensor2(1, 1, loss), nullptr);
  nodes_[id].backprop = [id, logits, probs = std::move(probs),
                         targets = std::move(targets)](Tape& t) {
    double g = t.nodes_[id].grad.at(0, 0);
    Tensor2& gl = t.nodes_[logits].grad;
    double inv_rows = 1.0 / probs.rows;
    for (int i = 0; i < probs.rows; ++i)
      for (int j = 0; j < probs.cols; ++j) {
        double d = probs.at(i, j) - (j == targets[i] ? 1.0 : 0.0);
        gl.at(i, j) += g * d * inv_rows;
      }
  };
  return id;
}

Tape::NodeId Tape::bce_with_logits(NodeId logits, Tensor2 targets) {
  check(logits);
  const Tensor2& lv = nodes_[logits].value;
  if (!lv.same_shape(targets))
    fail(ErrorKind::dimension, "bce_with_logits: targets " + targets.shape_str() +
                                   " vs logits " + lv.shape_str());
  double loss = 0.0;
  for (size_t k = 0; k < lv.data.size(); ++k) {
    double z = lv.data[k], t = targets.data[k];
    // max(z,0) - z*t + log(1 + exp(-|z|))
    loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
  }
  loss /= static_cast<double>(lv.size());
  if (!std::isfinite(loss)) fail(ErrorKind::numeric, "bce_with_logits: non-finite loss");
  NodeId id = push(Tensor2(1, 1, loss), nullptr);
  nodes_[id].backprop = [id, logits, targets = std::move(targets)](Tape& t) {
    double g = t.nodes_[id].grad.at(0, 0);
    const Tensor2& lv2 = t.nodes_[logits].value;
    Tensor2& gl = t.nodes_[logits].grad;
    double inv_n = 1.0 / static_cast<double>(lv2.size());
    for (size_t k = 0; k < lv2.data.size(); ++k) {
      double z = lv2.data[k];
      double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                          : std::exp(z) / (1.0 + std::exp(z));
      gl.data[k] += g * (p - targets.data[k]) * inv_n;
    }
  };
  return id;
}

void Tape::backward(NodeId root) {
  check(root);
  const Tensor2& rv = nodes_[root].value;
  if (rv.rows != 1 || rv.cols != 1)
    fail(ErrorKind::dimension, "backward root must be scalar, got " + rv.shape_str());
  nodes_[root].grad.at(0, 0) = 1.0;
  for (NodeId i = root; i >= 0; --i)
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params)
    std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void sgd_step(std::span<Param* const> params, double lr) {
  if (!(lr > 0.0)) fail(ErrorKind::config, "sgd_step: learning rate must be > 0");
  for (Param* p : params)
    for (size_t k = 0; k < p->value.data.size(); ++k)
      p->value.data[k] -= lr * p->grad.data[k];
}

double grad_check(const std::function<double()>& loss_fn,
                  std::span<Param* const> params, double h) {
  if (!(h > 0.0) || h > 1e-3)
    fail(ErrorKind::config, "grad_check: step must be in (0, 1e-3]");
  zero_grads(params);
  double base = loss_fn();
  if (!std::isfinite(base)) fail(ErrorKind::numeric, "grad_check: non-finite loss");
  std::vector<Tensor2> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    for (size_t k = 0; k < p->value.data.size(); ++k) {
      double old = p->value.data[k];
      p->value.data[k] = old + h;
      zero_grads(params);
      double lp = loss_fn();
      p->value.data[k] = old - h;
      zero_grads(params);
      double lm = loss_fn();
      p->value.data[k] = old;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        fail(ErrorKind::numeric, "grad_check: non-finite perturbed loss");
      double numeric = (lp - lm) / (2.0 * h);
      double a = analytic[pi].data[k];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1.0});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  // Leave the analytic gradients in place for callers that inspect them.
  zero_grads(params);
  for (size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return worst;
}

}  // namespace owl
