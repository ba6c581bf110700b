#include "lfv/nn.hpp"

#include <cmath>

namespace lfv::nn {

Tensor Init::he(Shape shape, int fan_in) { return uniform(std::move(shape), std::sqrt(6.0 / std::max(fan_in, 1))); }

Tensor Init::uniform(Shape shape, double bound) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> U(-bound, bound);
  for (auto& x : t.values()) x = U(rng_);
  return t;
}

Conv2d::Conv2d(int ci, int co, int k, int s, Init& init)
    : w(ad::parameter(init.he({k, k, ci, co}, k * k * ci))),
      b(ad::parameter(Tensor({co}, 0.0))),
      stride(s),
      pad(k / 2) {}

void Conv2d::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

Linear::Linear(int in, int out, Init& init)
    : w(ad::parameter(init.uniform({in, out}, std::sqrt(6.0 / (in + out))))), b(ad::parameter(Tensor({out}, 0.0))) {}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

LayerNorm::LayerNorm(int width) : gamma(ad::parameter(Tensor({width}, 1.0))), beta(ad::parameter(Tensor({width}, 0.0))) {}

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

RecurrentState RecurrentState::detached() const {
  if (empty()) return {};
  return {ad::constant(h.value()), ad::constant(c.value())};
}

ConvLSTMCell::ConvLSTMCell(int in, int hid, Init& init) : gates(in + hid, 4 * hid, 3, 1, init), hidden(hid) {
  // Forget-gate bias 1 keeps early sequences from washing out the cell.
  auto& b = gates.b.mutable_value();
  for (int i = hid; i < 2 * hid; ++i) b[i] = 1.0;
}

std::pair<ad::Var, RecurrentState> ConvLSTMCell::operator()(const ad::Var& x, const RecurrentState& s) const {
  RecurrentState st = s;
  if (st.empty()) {
    Tensor z({x.dim(0), x.dim(1), x.dim(2), hidden}, 0.0);
    st.h = ad::constant(z);
    st.c = ad::constant(z);
  }
  require(st.h.dim(1) == x.dim(1) && st.h.dim(2) == x.dim(2), "ConvLSTM: state size does not match input");
  const ad::Var xs[2] = {x, st.h};
  const ad::Var z = gates(ad::concat_last(xs));
  const ad::Var i = ad::sigmoid(ad::slice_last(z, 0, hidden));
  const ad::Var f = ad::sigmoid(ad::slice_last(z, hidden, hidden));
  const ad::Var o = ad::sigmoid(ad::slice_last(z, 2 * hidden, hidden));
  const ad::Var g = ad::tanh(ad::slice_last(z, 3 * hidden, hidden));
  const ad::Var c = ad::add(ad::mul(f, st.c), ad::mul(i, g));
  const ad::Var h = ad::mul(o, ad::tanh(c));
  return {h, RecurrentState{h, c}};
}

void ConvLSTMCell::collect(const std::string& prefix, NamedParams& out) const { gates.collect(prefix + ".gates", out); }

TransformerLayer::TransformerLayer(int width, int h, int mlp_width, Init& init)
    : ln1(width),
      ln2(width),
      q(width, width, init),
      k(width, width, init),
      v(width, width, init),
      proj(width, width, init),
      fc1(width, mlp_width, init),
      fc2(mlp_width, width, init),
      heads(h) {}

ad::Var TransformerLayer::operator()(const ad::Var& x) const {
  const ad::Var n1 = ln1(x);
  const ad::Var a = proj(ad::attention(q(n1), k(n1), v(n1), heads));
  const ad::Var x1 = ad::add(x, a);
  const ad::Var m = fc2(ad::relu(fc1(ln2(x1))));
  return ad::add(x1, m);
}

void TransformerLayer::collect(const std::string& prefix, NamedParams& out) const {
  ln1.collect(prefix + ".ln1", out);
  ln2.collect(prefix + ".ln2", out);
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  proj.collect(prefix + ".proj", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

std::vector<ad::Var> values_of(const NamedParams& p) {
  std::vector<ad::Var> out;
  out.reserve(p.size());
  for (const auto& [name, v] : p) out.push_back(v);
  return out;
}

}  // namespace lfv::nn
