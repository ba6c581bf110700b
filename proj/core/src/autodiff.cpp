#include "lfv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace lfv::ad {

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.size() != 0) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.ptr());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  require(root.value().size() == 1, "backward: root must be a scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

void zero_grads(std::span<Var> params) {
  for (auto& p : params) p.zero_grad();
}

namespace {

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

template <class F, class D>
Var unary(const Var& a, F f, D dfdx_from_in_out) {
  Tensor out(a.shape());
  const auto& in = a.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op(std::move(out), {a}, [dfdx_from_in_out](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx_from_in_out(p.value[i], self.value[i]);
  });
}

void accumulate(Node& p, const Tensor& g, double s = 1.0) {
  if (!p.requires_grad) return;
  auto& dst = p.grad_buffer();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * g[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var one_minus(const Var& a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return make_op(Tensor({1}, s), {a}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (auto& x : g.values()) x += self.grad[0];
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(std::max<std::size_t>(a.value().size(), 1));
  return scale(sum(a), 1.0 / n);
}

Var weighted_sum(std::span<const Var> xs, std::span<const double> ws) {
  require(xs.size() == ws.size(), "weighted_sum: arity mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(xs[i].value().size() == 1, "weighted_sum: inputs must be scalars");
    s += ws[i] * xs[i].value()[0];
  }
  std::vector<double> w(ws.begin(), ws.end());
  return make_op(Tensor({1}, s), std::vector<Var>(xs.begin(), xs.end()), [w](Node& self) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      Node& p = parent(self, i);
      if (p.requires_grad) p.grad_buffer()[0] += w[i] * self.grad[0];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [](Node& self) { accumulate(parent(self, 0), self.grad); });
}

Var gather(const Var& a, std::vector<std::size_t> index, Shape out_shape) {
  require(shape_numel(out_shape) == index.size(), "gather: index count does not match output shape");
  Tensor out(std::move(out_shape));
  const auto& in = a.value();
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < in.size(), "gather: index out of range");
    out[i] = in[index[i]];
  }
  return make_op(std::move(out), {a}, [idx = std::move(index)](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

Var concat_last(std::span<const Var> xs) {
  require(!xs.empty(), "concat_last: no inputs");
  Shape lead = xs[0].shape();
  lead.pop_back();
  std::vector<int> widths;
  int total = 0;
  for (const auto& x : xs) {
    Shape l = x.shape();
    const int c = l.back();
    l.pop_back();
    require(l == lead, "concat_last: leading shapes differ");
    widths.push_back(c);
    total += c;
  }
  const std::size_t rows = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  int off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& v = xs[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < widths[k]; ++c) out[r * total + off + c] = v[r * widths[k] + c];
    off += widths[k];
  }
  return make_op(std::move(out), std::vector<Var>(xs.begin(), xs.end()), [widths, rows, total](Node& self) {
    int off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (int c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Var stack(std::span<const Var> xs) {
  require(!xs.empty(), "stack: no inputs");
  const Shape inner = xs[0].shape();
  const std::size_t n = shape_numel(inner);
  Shape out_shape{static_cast<int>(xs.size())};
  out_shape.insert(out_shape.end(), inner.begin(), inner.end());
  Tensor out(out_shape);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    require(xs[k].shape() == inner, "stack: shapes differ");
    std::copy(xs[k].value().data(), xs[k].value().data() + n, out.data() + k * n);
  }
  return make_op(std::move(out), std::vector<Var>(xs.begin(), xs.end()), [n](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[k * n + i];
    }
  });
}

Var select(const Var& a, int i) {
  require(a.value().rank() >= 1 && i >= 0 && i < a.dim(0), "select: index out of range");
  Shape inner(a.shape().begin() + 1, a.shape().end());
  const std::size_t n = shape_numel(inner);
  Tensor out(inner);
  std::copy(a.value().data() + i * n, a.value().data() + (i + 1) * n, out.data());
  return make_op(std::move(out), {a}, [i, n](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t k = 0; k < n; ++k) g[i * n + k] += self.grad[k];
  });
}

Var slice_last(const Var& a, int start, int count) {
  const int C = a.shape().back();
  require(start >= 0 && count >= 0 && start + count <= C, "slice_last: channel range out of bounds");
  Shape out_shape = a.shape();
  out_shape.back() = count;
  const std::size_t rows = a.value().size() / static_cast<std::size_t>(C);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (int c = 0; c < count; ++c) out[r * count + c] = a.value()[r * C + start + c];
  return make_op(std::move(out), {a}, [rows, C, start, count](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < count; ++c) g[r * C + start + c] += self.grad[r * count + c];
  });
}

Var permute(const Var& a, const std::vector<int>& perm) {
  const Shape& in = a.shape();
  const int rank = static_cast<int>(in.size());
  require(static_cast<int>(perm.size()) == rank, "permute: rank mismatch");
  std::vector<std::size_t> in_stride(rank, 1);
  for (int k = rank - 2; k >= 0; --k) in_stride[k] = in_stride[k + 1] * static_cast<std::size_t>(in[k + 1]);
  Shape out_shape(rank);
  std::vector<bool> used(rank, false);
  for (int k = 0; k < rank; ++k) {
    require(perm[k] >= 0 && perm[k] < rank && !used[perm[k]], "permute: invalid permutation");
    used[perm[k]] = true;
    out_shape[k] = in[perm[k]];
  }
  const std::size_t n = a.value().size();
  std::vector<std::size_t> index(n);
  std::vector<int> pos(rank, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t src = 0;
    for (int k = 0; k < rank; ++k) src += static_cast<std::size_t>(pos[k]) * in_stride[perm[k]];
    index[i] = src;
    for (int k = rank - 1; k >= 0; --k) {
      if (++pos[k] < out_shape[k]) break;
      pos[k] = 0;
    }
  }
  return gather(a, std::move(index), std::move(out_shape));
}

namespace {

// C[M,N] += A[M,K] * B[K,N] with optional transposes expressed by strides.
void gemm_acc(const double* A, const double* B, double* C, int M, int K, int N, bool ta, bool tb) {
  for (int m = 0; m < M; ++m) {
    double* crow = C + static_cast<std::size_t>(m) * N;
    for (int k = 0; k < K; ++k) {
      const double a = ta ? A[static_cast<std::size_t>(k) * M + m] : A[static_cast<std::size_t>(m) * K + k];
      if (a == 0.0) continue;
      if (!tb) {
        const double* brow = B + static_cast<std::size_t>(k) * N;
        for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
      } else {
        for (int n = 0; n < N; ++n) crow[n] += a * B[static_cast<std::size_t>(n) * K + k];
      }
    }
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul: expects rank-2 inputs");
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  require(b.dim(0) == K, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({M, N});
  gemm_acc(a.value().data(), b.value().data(), out.data(), M, K, N, false, false);
  return make_op(std::move(out), {a, b}, [M, K, N](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    // dA = G B^T ; dB = A^T G
    if (pa.requires_grad) gemm_acc(self.grad.data(), pb.value.data(), pa.grad_buffer().data(), M, N, K, false, true);
    if (pb.requires_grad) gemm_acc(pa.value.data(), self.grad.data(), pb.grad_buffer().data(), K, M, N, true, false);
  });
}

Var add_bias(const Var& x, const Var& b) {
  const int C = x.shape().back();
  require(b.value().rank() == 1 && b.dim(0) == C, "add_bias: bias length mismatch");
  Tensor out = x.value();
  const std::size_t rows = out.size() / static_cast<std::size_t>(C);
  for (std::size_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) out[r * C + c] += b.value()[c];
  return make_op(std::move(out), {x, b}, [rows, C](Node& self) {
    accumulate(parent(self, 0), self.grad);
    Node& pb = parent(self, 1);
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < C; ++c) g[c] += self.grad[r * C + c];
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const int K = x.shape().back();
  require(w.value().rank() == 2 && w.dim(0) == K, "linear: weight shape " + shape_str(w.shape()) +
                                                      " incompatible with input " + shape_str(x.shape()));
  const int rows = static_cast<int>(x.value().size() / static_cast<std::size_t>(K));
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  Var y = reshape(matmul(reshape(x, {rows, K}), w), out_shape);
  return b.defined() ? add_bias(y, b) : y;
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int E = x.shape().back();
  require(gamma.value().size() == static_cast<std::size_t>(E) && beta.value().size() == static_cast<std::size_t>(E),
          "layer_norm: affine parameter size mismatch");
  const std::size_t rows = x.value().size() / static_cast<std::size_t>(E);
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data() + r * E;
    double mu = 0.0;
    for (int e = 0; e < E; ++e) mu += xr[e];
    mu /= E;
    double var = 0.0;
    for (int e = 0; e < E; ++e) var += (xr[e] - mu) * (xr[e] - mu);
    var /= E;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int e = 0; e < E; ++e) {
      const double h = (xr[e] - mu) * inv_std[r];
      xhat[r * E + e] = h;
      out[r * E + e] = gamma.value()[e] * h + beta.value()[e];
    }
  }
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, E](Node& self) {
                   Node& px = parent(self, 0);
                   Node& pg = parent(self, 1);
                   Node& pb = parent(self, 2);
                   std::vector<double> dxh(E);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* g = self.grad.data() + r * E;
                     const double* h = xhat.data() + r * E;
                     if (pg.requires_grad)
                       for (int e = 0; e < E; ++e) pg.grad_buffer()[e] += g[e] * h[e];
                     if (pb.requires_grad)
                       for (int e = 0; e < E; ++e) pb.grad_buffer()[e] += g[e];
                     if (!px.requires_grad) continue;
                     double m1 = 0.0, m2 = 0.0;
                     for (int e = 0; e < E; ++e) {
                       dxh[e] = g[e] * pg.value[e];
                       m1 += dxh[e];
                       m2 += dxh[e] * h[e];
                     }
                     m1 /= E;
                     m2 /= E;
                     auto& gx = px.grad_buffer();
                     for (int e = 0; e < E; ++e) gx[r * E + e] += inv_std[r] * (dxh[e] - m1 - h[e] * m2);
                   }
                 });
}

Var softmax_last(const Var& x) {
  const int C = x.shape().back();
  const std::size_t rows = x.value().size() / static_cast<std::size_t>(C);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data() + r * C;
    double mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += (out[r * C + c] = std::exp(xr[c] - mx));
    for (int c = 0; c < C; ++c) out[r * C + c] /= s;
  }
  return make_op(std::move(out), {x}, [rows, C](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * C;
      const double* gy = self.grad.data() + r * C;
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += gy[c] * y[c];
      for (int c = 0; c < C; ++c) g[r * C + c] += y[c] * (gy[c] - dot);
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads) {
  require(q.value().rank() == 3, "attention: expects [B, T, E]");
  require(q.shape() == k.shape() && q.shape() == v.shape(), "attention: q/k/v shapes differ");
  const int B = q.dim(0), T = q.dim(1), E = q.dim(2);
  require(heads >= 1 && E % heads == 0, "attention: embedding width not divisible by head count");
  const int dh = E / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out(q.shape());
  // Attention probabilities kept for backward: [B, heads, T, T].
  Tensor probs({B, heads, T, T});
  auto at = [E](const Tensor& t, int b, int i, int T_, int e) { return t[(static_cast<std::size_t>(b) * T_ + i) * E + e]; };
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h) {
      double* P = probs.data() + ((static_cast<std::size_t>(b) * heads + h) * T) * T;
      for (int i = 0; i < T; ++i) {
        double mx = -1e300;
        for (int j = 0; j < T; ++j) {
          double s = 0.0;
          for (int e = 0; e < dh; ++e) s += at(q.value(), b, i, T, h * dh + e) * at(k.value(), b, j, T, h * dh + e);
          P[i * T + j] = s * sc;
          mx = std::max(mx, P[i * T + j]);
        }
        double z = 0.0;
        for (int j = 0; j < T; ++j) z += (P[i * T + j] = std::exp(P[i * T + j] - mx));
        for (int j = 0; j < T; ++j) P[i * T + j] /= z;
        for (int e = 0; e < dh; ++e) {
          double o = 0.0;
          for (int j = 0; j < T; ++j) o += P[i * T + j] * at(v.value(), b, j, T, h * dh + e);
          out[(static_cast<std::size_t>(b) * T + i) * E + h * dh + e] = o;
        }
      }
    }
  return make_op(std::move(out), {q, k, v}, [probs = std::move(probs), B, T, E, heads, dh, sc](Node& self) {
    Node& pq = parent(self, 0);
    Node& pk = parent(self, 1);
    Node& pv = parent(self, 2);
    auto idx = [T, E](int b, int i, int e) { return (static_cast<std::size_t>(b) * T + i) * E + e; };
    std::vector<double> dP(static_cast<std::size_t>(T) * T);
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < heads; ++h) {
        const double* P = probs.data() + ((static_cast<std::size_t>(b) * heads + h) * T) * T;
        for (int i = 0; i < T; ++i)
          for (int j = 0; j < T; ++j) {
            double s = 0.0;
            for (int e = 0; e < dh; ++e) s += self.grad[idx(b, i, h * dh + e)] * pv.value[idx(b, j, h * dh + e)];
            dP[i * T + j] = s;
          }
        if (pv.requires_grad) {
          auto& gv = pv.grad_buffer();
          for (int j = 0; j < T; ++j)
            for (int e = 0; e < dh; ++e) {
              double s = 0.0;
              for (int i = 0; i < T; ++i) s += P[i * T + j] * self.grad[idx(b, i, h * dh + e)];
              gv[idx(b, j, h * dh + e)] += s;
            }
        }
        // dS = P * (dP - rowsum(dP * P)), then scale.
        for (int i = 0; i < T; ++i) {
          double dot = 0.0;
          for (int j = 0; j < T; ++j) dot += dP[i * T + j] * P[i * T + j];
          for (int j = 0; j < T; ++j) dP[i * T + j] = P[i * T + j] * (dP[i * T + j] - dot) * sc;
        }
        if (pq.requires_grad) {
          auto& gq = pq.grad_buffer();
          for (int i = 0; i < T; ++i)
            for (int j = 0; j < T; ++j) {
              const double d = dP[i * T + j];
              if (d == 0.0) continue;
              for (int e = 0; e < dh; ++e) gq[idx(b, i, h * dh + e)] += d * pk.value[idx(b, j, h * dh + e)];
            }
        }
        if (pk.requires_grad) {
          auto& gk = pk.grad_buffer();
          for (int i = 0; i < T; ++i)
            for (int j = 0; j < T; ++j) {
              const double d = dP[i * T + j];
              if (d == 0.0) continue;
              for (int e = 0; e < dh; ++e) gk[idx(b, j, h * dh + e)] += d * pq.value[idx(b, i, h * dh + e)];
            }
        }
      }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require(x.value().rank() == 4, "conv2d: input must be [B,H,W,C], got " + shape_str(x.shape()));
  require(w.value().rank() == 4 && w.dim(0) == w.dim(1), "conv2d: weight must be [k,k,Ci,Co]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int k = w.dim(0), Co = w.dim(3);
  require(w.dim(2) == Ci, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(stride >= 1, "conv2d: stride must be positive");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  require(Ho > 0 && Wo > 0, "conv2d: input smaller than kernel");
  Tensor out({B, Ho, Wo, Co});
  const double* X = x.value().data();
  const double* Wt = w.value().data();
  for (int bi = 0; bi < B; ++bi)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double* o = out.data() + ((static_cast<std::size_t>(bi) * Ho + oy) * Wo + ox) * Co;
        if (b.defined())
          for (int c = 0; c < Co; ++c) o[c] = b.value()[c];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            const double* xin = X + ((static_cast<std::size_t>(bi) * H + iy) * W + ix) * Ci;
            const double* wk = Wt + (static_cast<std::size_t>(ky) * k + kx) * Ci * Co;
            for (int ci = 0; ci < Ci; ++ci) {
              const double xv = xin[ci];
              if (xv == 0.0) continue;
              const double* wr = wk + static_cast<std::size_t>(ci) * Co;
              for (int c = 0; c < Co; ++c) o[c] += xv * wr[c];
            }
          }
        }
      }
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  const bool has_b = b.defined();
  return make_op(std::move(out), parents, [=](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    double* gx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    double* gw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    double* gb = nullptr;
    if (has_b && parent(self, 2).requires_grad) gb = parent(self, 2).grad_buffer().data();
    const double* Xv = px.value.data();
    const double* Wv = pw.value.data();
    for (int bi = 0; bi < B; ++bi)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double* g = self.grad.data() + ((static_cast<std::size_t>(bi) * Ho + oy) * Wo + ox) * Co;
          if (gb)
            for (int c = 0; c < Co; ++c) gb[c] += g[c];
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              const std::size_t xoff = ((static_cast<std::size_t>(bi) * H + iy) * W + ix) * Ci;
              const std::size_t woff = (static_cast<std::size_t>(ky) * k + kx) * Ci * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                const double* wr = Wv + woff + static_cast<std::size_t>(ci) * Co;
                if (gx) {
                  double s = 0.0;
                  for (int c = 0; c < Co; ++c) s += wr[c] * g[c];
                  gx[xoff + ci] += s;
                }
                if (gw) {
                  const double xv = Xv[xoff + ci];
                  if (xv == 0.0) continue;
                  double* gwr = gw + woff + static_cast<std::size_t>(ci) * Co;
                  for (int c = 0; c < Co; ++c) gwr[c] += xv * g[c];
                }
              }
            }
          }
        }
  });
}

namespace {

struct Tap {
  int i0, i1;
  double t;
};

std::vector<Tap> upsample_taps(int n) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    double s = std::max((o + 0.5) / 2.0 - 0.5, 0.0);
    int i0 = std::min(static_cast<int>(std::floor(s)), n - 1);
    int i1 = std::min(i0 + 1, n - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

Var upsample2x(const Var& x) {
  require(x.value().rank() == 4, "upsample2x: input must be [B,H,W,C]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto ty = upsample_taps(H);
  const auto tx = upsample_taps(W);
  Tensor out({B, 2 * H, 2 * W, C});
  auto in_at = [&](int b, int y, int xx) { return x.value().data() + ((static_cast<std::size_t>(b) * H + y) * W + xx) * C; };
  for (int b = 0; b < B; ++b)
    for (int oy = 0; oy < 2 * H; ++oy)
      for (int ox = 0; ox < 2 * W; ++ox) {
        const auto [y0, y1, wy] = ty[oy];
        const auto [x0, x1, wx] = tx[ox];
        double* o = out.data() + ((static_cast<std::size_t>(b) * 2 * H + oy) * 2 * W + ox) * C;
        const double *a = in_at(b, y0, x0), *bb = in_at(b, y0, x1), *c = in_at(b, y1, x0), *d = in_at(b, y1, x1);
        for (int ch = 0; ch < C; ++ch)
          o[ch] = (1 - wy) * ((1 - wx) * a[ch] + wx * bb[ch]) + wy * ((1 - wx) * c[ch] + wx * d[ch]);
      }
  return make_op(std::move(out), {x}, [=](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    double* g = p.grad_buffer().data();
    auto gi = [&](int b, int y, int xx) { return g + ((static_cast<std::size_t>(b) * H + y) * W + xx) * C; };
    for (int b = 0; b < B; ++b)
      for (int oy = 0; oy < 2 * H; ++oy)
        for (int ox = 0; ox < 2 * W; ++ox) {
          const auto [y0, y1, wy] = ty[oy];
          const auto [x0, x1, wx] = tx[ox];
          const double* go = self.grad.data() + ((static_cast<std::size_t>(b) * 2 * H + oy) * 2 * W + ox) * C;
          for (int ch = 0; ch < C; ++ch) {
            gi(b, y0, x0)[ch] += (1 - wy) * (1 - wx) * go[ch];
            gi(b, y0, x1)[ch] += (1 - wy) * wx * go[ch];
            gi(b, y1, x0)[ch] += wy * (1 - wx) * go[ch];
            gi(b, y1, x1)[ch] += wy * wx * go[ch];
          }
        }
  });
}

Var avg_pool2(const Var& x) {
  require(x.value().rank() == 4, "avg_pool2: input must be [B,H,W,C]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "avg_pool2: spatial size must be even");
  const int Ho = H / 2, Wo = W / 2;
  std::vector<std::size_t> idx;
  // Express as four gathers averaged; keeps backward trivially correct.
  std::vector<Var> parts;
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      idx.clear();
      idx.reserve(static_cast<std::size_t>(B) * Ho * Wo * C);
      for (int b = 0; b < B; ++b)
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx)
            for (int c = 0; c < C; ++c)
              idx.push_back(((static_cast<std::size_t>(b) * H + 2 * y + dy) * W + 2 * xx + dx) * C + c);
      parts.push_back(gather(x, idx, {B, Ho, Wo, C}));
    }
  return scale(add(add(parts[0], parts[1]), add(parts[2], parts[3])), 0.25);
}

Var pad_replicate(const Var& x, int h, int w) {
  require(x.value().rank() == 4, "pad_replicate: input must be [B,H,W,C]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(h >= H && w >= W, "pad_replicate: target smaller than input");
  if (h == H && w == W) return x;
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(B) * h * w * C);
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < C; ++c)
          idx.push_back(((static_cast<std::size_t>(b) * H + std::min(y, H - 1)) * W + std::min(xx, W - 1)) * C + c);
  return gather(x, std::move(idx), {B, h, w, C});
}

Var crop(const Var& x, int h, int w) {
  require(x.value().rank() == 4, "crop: input must be [B,H,W,C]");
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(h <= H && w <= W, "crop: window larger than input");
  if (h == H && w == W) return x;
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(B) * h * w * C);
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < C; ++c) idx.push_back(((static_cast<std::size_t>(b) * H + y) * W + xx) * C + c);
  return gather(x, std::move(idx), {B, h, w, C});
}

}  // namespace lfv::ad
