#pragma once

// Small layer library over lfv::ad. Layers own their parameters as leaf
// Vars; copying a layer aliases the same parameters.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lfv/autodiff.hpp"

namespace lfv::nn {

using NamedParams = std::vector<std::pair<std::string, ad::Var>>;

/// Deterministic parameter initializer.
class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}
  /// Uniform(-b, b) with b = sqrt(6 / fan_in) (He-uniform).
  Tensor he(Shape shape, int fan_in);
  Tensor uniform(Shape shape, double bound);

 private:
  std::mt19937_64 rng_;
};

struct Conv2d {
  ad::Var w;  // [k, k, Ci, Co]
  ad::Var b;  // [Co]
  int stride = 1;
  int pad = 1;

  Conv2d() = default;
  Conv2d(int ci, int co, int k, int stride, Init& init);
  ad::Var operator()(const ad::Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct Linear {
  ad::Var w;  // [in, out]
  ad::Var b;  // [out]

  Linear() = default;
  Linear(int in, int out, Init& init);
  ad::Var operator()(const ad::Var& x) const { return ad::linear(x, w, b); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNorm {
  ad::Var gamma;
  ad::Var beta;

  LayerNorm() = default;
  explicit LayerNorm(int width);
  ad::Var operator()(const ad::Var& x) const { return ad::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Hidden and cell maps of a convolutional LSTM, [1, h, w, C]. Undefined
/// (default-constructed) means "start of sequence".
struct RecurrentState {
  ad::Var h;
  ad::Var c;
  bool empty() const { return !h.defined(); }
  /// Drops the graph history but keeps the values (truncated backprop).
  RecurrentState detached() const;
};

struct ConvLSTMCell {
  Conv2d gates;  // [x, h] -> 4*hidden: input, forget, output, candidate
  int hidden = 0;

  ConvLSTMCell() = default;
  ConvLSTMCell(int in, int hidden, Init& init);
  std::pair<ad::Var, RecurrentState> operator()(const ad::Var& x, const RecurrentState& s) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Pre-norm transformer layer: x + MHA(LN(x)), then x + MLP(LN(x)).
struct TransformerLayer {
  LayerNorm ln1, ln2;
  Linear q, k, v, proj, fc1, fc2;
  int heads = 1;

  TransformerLayer() = default;
  TransformerLayer(int width, int heads, int mlp_width, Init& init);
  ad::Var operator()(const ad::Var& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

std::vector<ad::Var> values_of(const NamedParams& p);

}  // namespace lfv::nn
