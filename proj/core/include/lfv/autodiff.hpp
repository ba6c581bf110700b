#pragma once

// Tape-free reverse-mode differentiation over Tensors.
//
// Every op returns a Var whose Node holds the forward value, shared_ptr
// links to its inputs and a closure that pushes the node's gradient into its
// parents. backward() topologically sorts the reachable subgraph and runs the
// closures once each. Graphs die with their last Var; parameters are leaf
// nodes owned by the modules that use them.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lfv/tensor.hpp"

namespace lfv::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-allocated on first touch.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  /// Gradient after backward(); an empty tensor means "no gradient reached here".
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  void zero_grad() { node_->grad = Tensor(); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor t);
Var parameter(Tensor t);

/// Builds a result node. `bw` receives the result node (its grad is
/// populated) and must accumulate into the parents' grad_buffer(). It is
/// dropped when no parent requires a gradient.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw);

/// Seeds d(root)/d(root) = 1 (root must be a scalar) and back-propagates.
void backward(const Var& root);

void zero_grads(std::span<Var> params);

// ---- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
/// Clamps to [lo, hi]; gradient passes only where the input is inside.
Var clamp(const Var& a, double lo, double hi);

// ---- reductions ------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
/// Weighted sum of scalar vars: Σ w_i · x_i.
Var weighted_sum(std::span<const Var> xs, std::span<const double> ws);

// ---- structural ------------------------------------------------------------
Var reshape(const Var& a, Shape shape);
/// out[i] = a[index[i]]; backward scatter-adds. Covers slicing, permutation,
/// patch extraction and token reassembly.
Var gather(const Var& a, std::vector<std::size_t> index, Shape out_shape);
/// Concatenates along the last axis; all leading dims must agree.
Var concat_last(std::span<const Var> xs);
/// Stacks equal-shaped vars along a new leading axis.
Var stack(std::span<const Var> xs);
/// Slice i of the leading axis.
Var select(const Var& a, int i);
/// Channels [start, start+count) of the last axis.
Var slice_last(const Var& a, int start, int count);
/// Axis permutation: out axis k is input axis perm[k].
Var permute(const Var& a, const std::vector<int>& perm);

// ---- dense layers ----------------------------------------------------------
/// [M,K] x [K,N] -> [M,N]
Var matmul(const Var& a, const Var& b);
/// x [..., K] · w [K, N] + b [N] -> [..., N]; b may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);
/// Adds b [C] to every row of x [..., C].
Var add_bias(const Var& x, const Var& b);
/// Normalizes over the last axis then applies gamma/beta [E].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Softmax over the last axis.
Var softmax_last(const Var& x);
/// Scaled dot-product multi-head attention on q,k,v [B, T, E]; E % heads == 0.
Var attention(const Var& q, const Var& k, const Var& v, int heads);

// ---- image layers (x is [B, H, W, C]) ---------------------------------------
/// w [k, k, Ci, Co], b [Co] (may be undefined); zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Bilinear x2 upsampling, half-pixel centers.
Var upsample2x(const Var& x);
Var avg_pool2(const Var& x);
/// Replicate-pads bottom/right up to (h, w).
Var pad_replicate(const Var& x, int h, int w);
/// Keeps the top-left (h, w) window.
Var crop(const Var& x, int h, int w);

}  // namespace lfv::ad
