#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "owl/common.hpp"

namespace owl {

// Dense row-major matrix of 64-bit floats. Rank-2 is all the pipeline needs;
// multi-head attention is expressed as per-head 2-D slices.
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(int r, int c, double fill = 0.0);
  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rs);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  std::string shape_str() const;
};

// Trainable weight with a persistently accumulated gradient.
struct Param {
  std::string id;
  Tensor2 value;
  Tensor2 grad;

  Param() = default;
  Param(std::string id_, Tensor2 v)
      : id(std::move(id_)), value(std::move(v)), grad(value.rows, value.cols) {}
};

// Boolean attention pattern. `window` records the band half-width*2 when the
// mask was built by banded_attention_mask; -1 for ad-hoc masks.
struct AttentionMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> allow;
  int window = -1;

  static AttentionMask all_allowed(int r, int c);
  bool at(int r, int c) const { return allow[static_cast<size_t>(r) * cols + c] != 0; }
  void set(int r, int c, bool v) { allow[static_cast<size_t>(r) * cols + c] = v ? 1 : 0; }
};

// Plain (untaped) kernels.
Tensor2 matmul_plain(const Tensor2& a, const Tensor2& b);
Tensor2 transpose_plain(const Tensor2& a);
Tensor2 masked_row_softmax_plain(const Tensor2& scores, const AttentionMask& mask);
Tensor2 row_softmax_plain(const Tensor2& scores);

// Reverse-mode tape. Records each differentiable operation in execution
// order; backward() replays the list in exact reverse, accumulating into the
// node grads and, for leaves created with param(), into the bound Param.grad.
// A tape belongs to one training context at a time.
class Tape {
 public:
  using NodeId = int;

  NodeId input(Tensor2 v);       // constant leaf
  NodeId param(Param& p);        // differentiable leaf bound to p.grad

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId linear(NodeId x, NodeId w, NodeId b);  // x*w + row-broadcast bias
  NodeId masked_row_softmax(NodeId scores, AttentionMask mask);
  NodeId row_softmax(NodeId scores);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
  NodeId cross_entropy(NodeId logits, std::vector<int> targets);
  NodeId bce_with_logits(NodeId logits, Tensor2 targets);

  const Tensor2& value(NodeId id) const { return nodes_[id].value; }
  const Tensor2& grad(NodeId id) const { return nodes_[id].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Seeds d(root)/d(root) = 1 and visits nodes in reverse execution order.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    std::function<void(Tape&)> backprop;  // empty for constant leaves
  };

  NodeId push(Tensor2 value, std::function<void(Tape&)> backprop);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
};

void zero_grads(std::span<Param* const> params);
void sgd_step(std::span<Param* const> params, double lr);

// Central-difference gradient checker. `loss_fn` must run a full forward and
// backward pass, accumulating analytic gradients into the params, and return
// the scalar loss. Returns the worst relative error over all param entries,
// with |a - n| / max(|a|, |n|, 1) as the per-entry measure (absolute for
// near-zero gradients, relative otherwise; 0 when both sides vanish).
double grad_check(const std::function<double()>& loss_fn,
                  std::span<Param* const> params, double h);

}  // namespace owl
