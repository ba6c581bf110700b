#include "lfv/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace lfv {

namespace {

using ad::Var;

constexpr std::uint64_t kBinsSubsampleSeed = 0x5eed'b175ULL;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_lf_var(const Var& L, const char* what) {
  require(L.value().rank() == 5 && L.dim(4) == 3,
          std::string(what) + ": light field must be [U,V,H,W,3], got " + shape_str(L.shape()));
}

AngularGrid grid_of(const Var& L) { return AngularGrid(L.dim(0), L.dim(1)); }

void require_image_size(const Image& I, int h, int w, const char* what) {
  require(I.height() == h && I.width() == w && I.channels() == 3,
          std::string(what) + ": image " + shape_str(I.tensor().shape()) + " does not match light field " +
              std::to_string(h) + "x" + std::to_string(w) + "x3");
}

// View k (row-major over (iu, iv)) of an [U,V,H,W,3] var as [H,W,3].
Var view_block(const Var& L, int k) {
  const int H = L.dim(2), W = L.dim(3);
  const std::size_t n = static_cast<std::size_t>(H) * W * 3;
  Tensor out({H, W, 3});
  std::copy(L.value().data() + k * n, L.value().data() + (k + 1) * n, out.data());
  return ad::make_op(std::move(out), {L}, [k, n](ad::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[k * n + i] += self.grad[i];
  });
}

// Σ_p w(p) Σ_c |a - b| / (C Σ_p w(p)), a,b [H,W,C], w per pixel.
Var masked_l1(const Var& a, const Tensor& b, std::vector<double> w) {
  require_same_shape(a.value(), b, "masked_l1");
  const int C = a.dim(2);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  const double norm = wsum > 0.0 ? 1.0 / (wsum * C) : 0.0;
  double s = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p) {
    if (w[p] == 0.0) continue;
    for (int c = 0; c < C; ++c) s += w[p] * std::abs(a.value()[p * C + c] - b[p * C + c]);
  }
  return ad::make_op(Tensor({1}, s * norm), {a}, [b, w = std::move(w), C, norm](ad::Node& self) {
    const Tensor& av = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    const double g0 = self.grad[0] * norm;
    for (std::size_t p = 0; p < w.size(); ++p) {
      if (w[p] == 0.0) continue;
      for (int c = 0; c < C; ++c) {
        const std::size_t i = p * C + c;
        g[i] += g0 * w[p] * sign(av[i] - b[i]);
      }
    }
  });
}

Var mean_of(std::vector<Var> xs) {
  std::vector<double> w(xs.size(), 1.0 / static_cast<double>(xs.size()));
  return ad::weighted_sum(xs, w);
}

Tensor flow_tensor(const FlowField& f) { return f.tensor(); }

double scalar(const Var& v) { return v.value()[0]; }

Var lf_const(const LightField& L) { return ad::constant(L.tensor()); }

}  // namespace

// ---- weights and reports -----------------------------------------------------

void LossWeights::validate() const {
  for (double w : {photo, geo, temp, occ, bins, tv})
    require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and nonnegative");
}

std::string LossReport::to_record() const {
  std::ostringstream os;
  os.precision(17);
  os << "step=" << step << " photo=" << photo << " geo=" << geo << " temp=" << temp << " occ=" << occ
     << " bins=" << bins << " tv=" << tv << " total=" << total;
  return os.str();
}

LossReport LossReport::parse_record(const std::string& line) {
  LossReport r;
  std::istringstream is(line);
  std::string tok;
  int seen = 0;
  while (is >> tok) {
    const auto eq = tok.find('=');
    require(eq != std::string::npos, "loss record: malformed token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "step") r.step = std::stoll(val);
      else if (key == "photo") r.photo = std::stod(val);
      else if (key == "geo") r.geo = std::stod(val);
      else if (key == "temp") r.temp = std::stod(val);
      else if (key == "occ") r.occ = std::stod(val);
      else if (key == "bins") r.bins = std::stod(val);
      else if (key == "tv") r.tv = std::stod(val);
      else if (key == "total") r.total = std::stod(val);
      else throw Error("loss record: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw Error("loss record: bad value for '" + key + "'");
    }
    ++seen;
  }
  require(seen == 8, "loss record: expected 8 fields, got " + std::to_string(seen));
  return r;
}

LossReport total_self_loss(const LossTerms& t, const LossWeights& w, std::int64_t step) {
  w.validate();
  LossReport r;
  r.step = step;
  r.photo = t.photo;
  r.geo = t.geo;
  r.temp = t.temp;
  r.occ = t.occ;
  r.bins = t.bins;
  r.tv = t.tv;
  r.total = w.photo * t.photo + w.geo * t.geo + w.temp * t.temp + w.occ * t.occ + w.bins * t.bins + w.tv * t.tv;
  return r;
}

std::vector<double> margin_weights(int h, int w, int margin) {
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  if (h <= 2 * margin || w <= 2 * margin) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x) out[static_cast<std::size_t>(y) * w + x] = 1.0;
  return out;
}

// ---- photometric / geometric / temporal -------------------------------------

Var photometric_loss(const Var& L, const Image& I) {
  require_lf_var(L, "photometric_loss");
  const auto g = grid_of(L);
  require_image_size(I, L.dim(2), L.dim(3), "photometric_loss");
  const int k = g.index_u(0) * g.V + g.index_v(0);
  return masked_l1(view_block(L, k), I.tensor(), margin_weights(L.dim(2), L.dim(3)));
}

Var geometric_loss(const Var& L, const Image& I, const DisparityMap& d) {
  require_lf_var(L, "geometric_loss");
  const auto g = grid_of(L);
  const int H = L.dim(2), W = L.dim(3);
  require_image_size(I, H, W, "geometric_loss");
  require(d.height() == H && d.width() == W, "geometric_loss: disparity size mismatch");
  const auto w = margin_weights(H, W);
  std::vector<Var> per_view;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) {
      const auto o = g.offset(iu, iv);
      Var view = view_block(L, iu * g.V + iv);
      if (o.u != 0 || o.v != 0)
        view = inverse_warp(view, ad::constant(flow_tensor(sai_to_center_displacement(o, d))));
      per_view.push_back(masked_l1(view, I.tensor(), w));
    }
  return mean_of(std::move(per_view));
}

Var temporal_loss(const Var& L, const Image& I_next, const DisparityMap& d, const FlowField& flow_next_to_t) {
  require_lf_var(L, "temporal_loss");
  const auto g = grid_of(L);
  const int H = L.dim(2), W = L.dim(3);
  require_image_size(I_next, H, W, "temporal_loss");
  require(d.height() == H && d.width() == W, "temporal_loss: disparity size mismatch");
  require(flow_next_to_t.height() == H && flow_next_to_t.width() == W, "temporal_loss: flow size mismatch");
  const auto w = margin_weights(H, W);
  const Var flow = ad::constant(flow_tensor(flow_next_to_t));
  std::vector<Var> per_view;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) {
      const auto o = g.offset(iu, iv);
      Var view = view_block(L, iu * g.V + iv);
      if (o.u != 0 || o.v != 0)
        view = inverse_warp(view, ad::constant(flow_tensor(sai_to_center_displacement(o, d))));
      per_view.push_back(masked_l1(inverse_warp(view, flow), I_next.tensor(), w));
    }
  return mean_of(std::move(per_view));
}

double photometric_loss(const LightField& L, const Image& I) { return scalar(photometric_loss(lf_const(L), I)); }

double geometric_loss(const LightField& L, const Image& I, const DisparityMap& d) {
  return scalar(geometric_loss(lf_const(L), I, d));
}

double temporal_loss(const LightField& L, const Image& I_next, const DisparityMap& d,
                     const FlowField& flow_next_to_t) {
  return scalar(temporal_loss(lf_const(L), I_next, d, flow_next_to_t));
}

// ---- disocclusion -------------------------------------------------------------

Var disocclusion_loss(const Var& L, const LightField& cand_prev, const LightField& cand_next, const HoleMask& M) {
  require_lf_var(L, "disocclusion_loss");
  require_same_shape(L.value(), cand_prev.tensor(), "disocclusion_loss (previous candidates)");
  require_same_shape(L.value(), cand_next.tensor(), "disocclusion_loss (next candidates)");
  const auto g = grid_of(L);
  const int H = L.dim(2), W = L.dim(3);
  require(M.grid == g && M.height == H && M.width == W, "disocclusion_loss: mask size mismatch");

  const auto margin = margin_weights(H, W);
  std::vector<std::uint8_t> active(M.bits.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    active[i] = M.bits[i] && margin[i % margin.size()] > 0.0;
    count += active[i];
  }
  const double norm = count ? 1.0 / (static_cast<double>(count) * 3) : 0.0;

  const Tensor& lv = L.value();
  const Tensor& cp = cand_prev.tensor();
  const Tensor& cn = cand_next.tensor();
  double s = 0.0;
  for (std::size_t p = 0; p < active.size(); ++p) {
    if (!active[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = p * 3 + c;
      s += std::min(std::abs(lv[i] - cp[i]), std::abs(lv[i] - cn[i]));
    }
  }
  return ad::make_op(Tensor({1}, s * norm), {L}, [active = std::move(active), cp, cn, norm](ad::Node& self) {
    const Tensor& lv = self.parents[0]->value;
    auto& gr = self.parents[0]->grad_buffer();
    const double g0 = self.grad[0] * norm;
    for (std::size_t p = 0; p < active.size(); ++p) {
      if (!active[p]) continue;
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = p * 3 + c;
        const double ep = lv[i] - cp[i], en = lv[i] - cn[i];
        gr[i] += g0 * (std::abs(ep) <= std::abs(en) ? sign(ep) : sign(en));
      }
    }
  });
}

double disocclusion_loss(const LightField& L, const LightField& cand_prev, const LightField& cand_next,
                         const HoleMask& M) {
  return scalar(disocclusion_loss(lf_const(L), cand_prev, cand_next, M));
}

// ---- bin density ----------------------------------------------------------------

namespace {

std::vector<double> bins_sample(const DisparityMap& d) {
  std::vector<double> v(d.tensor().values().begin(), d.tensor().values().end());
  if (v.size() > static_cast<std::size_t>(kBinsMaxPixels)) {
    std::mt19937_64 rng(kBinsSubsampleSeed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(kBinsMaxPixels); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
      std::swap(v[i], v[pick(rng)]);
    }
    v.resize(kBinsMaxPixels);
  }
  std::sort(v.begin(), v.end());
  return v;
}

// Nearest value in sorted `v` to x.
double nearest(const std::vector<double>& v, double x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end()) return v.back();
  if (it == v.begin()) return *it;
  const double hi = *it, lo = *(it - 1);
  return (x - lo) <= (hi - x) ? lo : hi;
}

}  // namespace

Var bin_density_loss(const Var& D, const DisparityMap& d) {
  require(D.value().rank() == 1 && D.dim(0) >= 1, "bin_density_loss: D must be a nonempty vector");
  require(d.tensor().size() > 0, "bin_density_loss: empty disparity map");
  auto px = bins_sample(d);
  const auto& Dv = D.value();
  const int N = D.dim(0);
  const double P = static_cast<double>(px.size());

  // Pixel -> nearest plane: record the argmin plane per pixel.
  std::vector<int> owner(px.size());
  double s1 = 0.0;
  for (std::size_t p = 0; p < px.size(); ++p) {
    int best = 0;
    for (int n = 1; n < N; ++n)
      if (std::abs(px[p] - Dv[n]) < std::abs(px[p] - Dv[best])) best = n;
    owner[p] = best;
    s1 += std::abs(px[p] - Dv[best]);
  }
  double s2 = 0.0;
  std::vector<double> near(N);
  for (int n = 0; n < N; ++n) {
    near[n] = nearest(px, Dv[n]);
    s2 += std::abs(Dv[n] - near[n]);
  }
  const double value = s1 / P + s2 / N;
  return ad::make_op(Tensor({1}, value), {D},
                     [px = std::move(px), owner = std::move(owner), near = std::move(near), P, N](ad::Node& self) {
                       const Tensor& Dv = self.parents[0]->value;
                       auto& g = self.parents[0]->grad_buffer();
                       const double g0 = self.grad[0];
                       for (std::size_t p = 0; p < px.size(); ++p) g[owner[p]] += g0 * sign(Dv[owner[p]] - px[p]) / P;
                       for (int n = 0; n < N; ++n) g[n] += g0 * sign(Dv[n] - near[n]) / N;
                     });
}

double bin_density_loss(const DisplacementVector& D, const DisparityMap& d) {
  require(D.size() >= 1, "bin_density_loss: D must be nonempty");
  return scalar(bin_density_loss(ad::constant(Tensor({D.size()}, D.values)), d));
}

// ---- smoothness and refinement ------------------------------------------------

Var tv_loss(const Var& L) {
  require_lf_var(L, "tv_loss");
  const int views = L.dim(0) * L.dim(1), H = L.dim(2), W = L.dim(3);
  const Tensor& v = L.value();
  auto at = [H, W](int k, int y, int x, int c) {
    return ((static_cast<std::size_t>(k) * H + y) * W + x) * 3 + c;
  };
  const double nh = W > 1 ? 1.0 / (static_cast<double>(views) * H * (W - 1) * 3) : 0.0;
  const double nv = H > 1 ? 1.0 / (static_cast<double>(views) * (H - 1) * W * 3) : 0.0;
  double sh = 0.0, sv = 0.0;
  for (int k = 0; k < views; ++k)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) {
          if (x + 1 < W) sh += std::abs(v[at(k, y, x + 1, c)] - v[at(k, y, x, c)]);
          if (y + 1 < H) sv += std::abs(v[at(k, y + 1, x, c)] - v[at(k, y, x, c)]);
        }
  return ad::make_op(Tensor({1}, sh * nh + sv * nv), {L}, [views, H, W, nh, nv, at](ad::Node& self) {
    const Tensor& v = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    const double gh = self.grad[0] * nh, gv = self.grad[0] * nv;
    for (int k = 0; k < views; ++k)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c) {
            const std::size_t i = at(k, y, x, c);
            if (x + 1 < W) {
              const std::size_t j = at(k, y, x + 1, c);
              const double s = sign(v[j] - v[i]) * gh;
              g[j] += s;
              g[i] -= s;
            }
            if (y + 1 < H) {
              const std::size_t j = at(k, y + 1, x, c);
              const double s = sign(v[j] - v[i]) * gv;
              g[j] += s;
              g[i] -= s;
            }
          }
  });
}

double tv_loss(const LightField& L) { return scalar(tv_loss(lf_const(L))); }

Var refinement_loss(const Var& L_ref, const LightField& L_gt) {
  require_same_shape(L_ref.value(), L_gt.tensor(), "refinement_loss");
  const Tensor& b = L_gt.tensor();
  const double n = 1.0 / static_cast<double>(b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) s += std::abs(L_ref.value()[i] - b[i]);
  return ad::make_op(Tensor({1}, s * n), {L_ref}, [b, n](ad::Node& self) {
    const Tensor& a = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < b.size(); ++i) g[i] += self.grad[0] * n * sign(a[i] - b[i]);
  });
}

double refinement_loss(const LightField& L_ref, const LightField& L_gt) {
  return scalar(refinement_loss(lf_const(L_ref), L_gt));
}

}  // namespace lfv
