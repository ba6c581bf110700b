#include "lfv/light_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sampling.hpp"

namespace lfv {

using detail::bilinear;
using detail::bilinear_axis;

AngularGrid::AngularGrid(int u, int v) : U(u), V(v) {
  require(U >= 1 && V >= 1 && U % 2 == 1 && V % 2 == 1,
          "angular grid must be odd-sized, got " + std::to_string(U) + "x" + std::to_string(V));
}

bool AngularGrid::contains(ViewOffset o) const {
  return std::abs(o.u) <= (U - 1) / 2 && std::abs(o.v) <= (V - 1) / 2;
}

std::vector<ViewOffset> AngularGrid::offsets() const {
  std::vector<ViewOffset> out;
  out.reserve(static_cast<std::size_t>(U) * V);
  for (int iu = 0; iu < U; ++iu)
    for (int iv = 0; iv < V; ++iv) out.push_back(offset(iu, iv));
  return out;
}

Image::Image(int h, int w, int c, double fill) : t_({h, w, c}, fill) {}

Image::Image(Tensor t) : t_(std::move(t)) {
  require(t_.rank() == 3, "image tensor must be [H,W,C], got " + shape_str(t_.shape()));
}

LightField::LightField(AngularGrid grid, int h, int w, double fill)
    : grid_(grid), t_({grid.U, grid.V, h, w, 3}, fill) {}

LightField::LightField(AngularGrid grid, Tensor t) : grid_(grid), t_(std::move(t)) {
  require(t_.rank() == 5 && t_.dim(0) == grid_.U && t_.dim(1) == grid_.V && t_.dim(4) == 3,
          "light field tensor must be [U,V,H,W,3] matching the grid, got " + shape_str(t_.shape()));
  for (double v : t_.values())
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "light field values must be finite and in [0,1]");
}

Image LightField::view(int iu, int iv) const {
  require(iu >= 0 && iu < grid_.U && iv >= 0 && iv < grid_.V, "view index out of range");
  const std::size_t n = static_cast<std::size_t>(height()) * width() * 3;
  Tensor t({height(), width(), 3});
  std::copy_n(t_.data() + index(iu, iv, 0, 0, 0), n, t.data());
  return Image(std::move(t));
}

Image LightField::view(ViewOffset o) const {
  require(grid_.contains(o), "view offset outside the angular grid");
  return view(grid_.index_u(o.u), grid_.index_v(o.v));
}

void LightField::set_view(int iu, int iv, const Image& img) {
  require(img.height() == height() && img.width() == width() && img.channels() == 3, "set_view: size mismatch");
  std::copy_n(img.tensor().data(), img.tensor().size(), t_.data() + index(iu, iv, 0, 0, 0));
}

TDRepresentation::TDRepresentation(int n_layers, int rank, int h, int w, double fill)
    : t_({n_layers, rank, h, w, 3}, fill) {
  require(n_layers >= 1 && rank >= 1, "tensor-display representation needs N >= 1 and R >= 1");
}

TDRepresentation::TDRepresentation(Tensor t) : t_(std::move(t)) {
  require(t_.rank() == 5 && t_.dim(4) == 3 && t_.dim(0) >= 1 && t_.dim(1) >= 1,
          "tensor-display layers must be [N,R,H,W,3], got " + shape_str(t_.shape()));
}

bool DisplacementVector::is_sorted() const { return std::is_sorted(values.begin(), values.end()); }

void DisplacementVector::sort() { std::sort(values.begin(), values.end()); }

DisplacementVector DisplacementVector::uniform(int n_layers) {
  DisplacementVector d;
  for (int i = 0; i < n_layers; ++i) d.values.push_back(static_cast<double>(TDRepresentation::layer_index(i, n_layers)));
  return d;
}

namespace {

// Bilinear footprint of one sample on an [H,W,3] plane, shared by the three
// channels and every rank term.
struct Tap {
  std::size_t o00, o01, o10, o11;
  double tx, ty;
  bool in_x, in_y;
};

Tap make_tap(const detail::Axis& ay, const detail::Axis& ax, int W) {
  const auto row0 = static_cast<std::size_t>(ay.i0) * W, row1 = static_cast<std::size_t>(ay.i1) * W;
  return {(row0 + ax.i0) * 3, (row0 + ax.i1) * 3, (row1 + ax.i0) * 3, (row1 + ax.i1) * 3,
          ax.t, ay.t, ax.inside, ay.inside};
}

inline double tap_value(const double* p, const Tap& t) {
  const double top = p[t.o00] + t.tx * (p[t.o01] - p[t.o00]);
  const double bot = p[t.o10] + t.tx * (p[t.o11] - p[t.o10]);
  return top + t.ty * (bot - top);
}

}  // namespace

Tensor td_synthesize_kernel(const Tensor& F, std::span<const double> D, const AngularGrid& grid, Tensor* raw) {
  require(F.rank() == 5 && F.dim(4) == 3, "td_synthesize: layers must be [N,R,H,W,3], got " + shape_str(F.shape()));
  const int N = F.dim(0), R = F.dim(1), H = F.dim(2), W = F.dim(3);
  require(static_cast<int>(D.size()) == N, "td_synthesize: displacement count " + std::to_string(D.size()) +
                                               " does not match layer count " + std::to_string(N));
  require(grid.U % 2 == 1 && grid.V % 2 == 1, "td_synthesize: angular grid must be odd-sized");
  for (double d : D) require(std::isfinite(d), "td_synthesize: displacements must be finite");

  Tensor out({grid.U, grid.V, H, W, 3});
  if (raw) *raw = Tensor(out.shape());
  const std::size_t plane = static_cast<std::size_t>(H) * W * 3;
  std::vector<detail::Axis> ay(N);
  std::vector<Tap> taps(N);
  std::size_t o = 0;
  for (int iu = 0; iu < grid.U; ++iu)
    for (int iv = 0; iv < grid.V; ++iv) {
      const ViewOffset off = grid.offset(iu, iv);
      for (int y = 0; y < H; ++y) {
        for (int n = 0; n < N; ++n) ay[n] = bilinear_axis(y + D[n] * off.v, H);
        for (int x = 0; x < W; ++x, o += 3) {
          for (int n = 0; n < N; ++n) taps[n] = make_tap(ay[n], bilinear_axis(x + D[n] * off.u, W), W);
          double acc[3] = {0.0, 0.0, 0.0};
          for (int r = 0; r < R; ++r) {
            double prod[3] = {1.0, 1.0, 1.0};
            for (int n = 0; n < N; ++n) {
              const double* p = F.data() + (static_cast<std::size_t>(n) * R + r) * plane;
              for (int c = 0; c < 3; ++c) prod[c] *= tap_value(p + c, taps[n]);
            }
            for (int c = 0; c < 3; ++c) acc[c] += prod[c];
          }
          for (int c = 0; c < 3; ++c) {
            if (raw) (*raw)[o + c] = acc[c];
            out[o + c] = std::clamp(acc[c], 0.0, 1.0);
          }
        }
      }
    }
  return out;
}

LightField td_synthesize(const TDRepresentation& F, const DisplacementVector& D, const AngularGrid& grid) {
  return LightField(grid, td_synthesize_kernel(F.tensor(), D.values, grid, nullptr));
}

LightField td_synthesize_uniform(const TDRepresentation& F, const AngularGrid& grid) {
  return td_synthesize(F, DisplacementVector::uniform(F.layers()), grid);
}

ad::Var td_synthesize(const ad::Var& F, const ad::Var& D, const AngularGrid& grid) {
  require(D.value().rank() == 1, "td_synthesize: displacements must be a vector");
  Tensor raw;
  Tensor out = td_synthesize_kernel(F.value(), D.value().values(), grid, &raw);
  return ad::make_op(std::move(out), {F, D}, [grid, raw = std::move(raw)](ad::Node& self) {
    ad::Node& pf = *self.parents[0];
    ad::Node& pd = *self.parents[1];
    const Tensor& Fv = pf.value;
    const int N = Fv.dim(0), R = Fv.dim(1), H = Fv.dim(2), W = Fv.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W * 3;
    const auto Dv = pd.value.values();
    double* gF = pf.requires_grad ? pf.grad_buffer().data() : nullptr;
    double* gD = pd.requires_grad ? pd.grad_buffer().data() : nullptr;
    std::vector<detail::Axis> ay(N);
    std::vector<Tap> taps(N);
    std::vector<double> val(static_cast<std::size_t>(N) * 3), ddx(val.size()), ddy(val.size());
    std::vector<double> prefix(N + 1), suffix(N + 1);
    std::size_t o = 0;
    for (int iu = 0; iu < grid.U; ++iu)
      for (int iv = 0; iv < grid.V; ++iv) {
        const ViewOffset off = grid.offset(iu, iv);
        for (int y = 0; y < H; ++y) {
          for (int n = 0; n < N; ++n) ay[n] = bilinear_axis(y + Dv[n] * off.v, H);
          for (int x = 0; x < W; ++x, o += 3) {
            double g[3];
            bool any = false;
            for (int c = 0; c < 3; ++c) {
              g[c] = (raw[o + c] < 0.0 || raw[o + c] > 1.0) ? 0.0 : self.grad[o + c];
              any = any || g[c] != 0.0;
            }
            if (!any) continue;
            for (int n = 0; n < N; ++n) taps[n] = make_tap(ay[n], bilinear_axis(x + Dv[n] * off.u, W), W);
            for (int r = 0; r < R; ++r) {
              for (int n = 0; n < N; ++n) {
                const Tap& t = taps[n];
                const double* p = Fv.data() + (static_cast<std::size_t>(n) * R + r) * plane;
                for (int c = 0; c < 3; ++c) {
                  const double a = p[t.o00 + c], b = p[t.o01 + c], cc = p[t.o10 + c], d = p[t.o11 + c];
                  const double top = a + t.tx * (b - a), bot = cc + t.tx * (d - cc);
                  val[n * 3 + c] = top + t.ty * (bot - top);
                  ddx[n * 3 + c] = t.in_x ? (1 - t.ty) * (b - a) + t.ty * (d - cc) : 0.0;
                  ddy[n * 3 + c] = t.in_y ? bot - top : 0.0;
                }
              }
              for (int c = 0; c < 3; ++c) {
                if (g[c] == 0.0) continue;
                prefix[0] = 1.0;
                for (int n = 0; n < N; ++n) prefix[n + 1] = prefix[n] * val[n * 3 + c];
                suffix[N] = 1.0;
                for (int n = N - 1; n >= 0; --n) suffix[n] = suffix[n + 1] * val[n * 3 + c];
                for (int n = 0; n < N; ++n) {
                  const double go = g[c] * prefix[n] * suffix[n + 1];
                  const Tap& t = taps[n];
                  if (gF) {
                    double* gp = gF + (static_cast<std::size_t>(n) * R + r) * plane + c;
                    gp[t.o00] += go * (1 - t.ty) * (1 - t.tx);
                    gp[t.o01] += go * (1 - t.ty) * t.tx;
                    gp[t.o10] += go * t.ty * (1 - t.tx);
                    gp[t.o11] += go * t.ty * t.tx;
                  }
                  if (gD) gD[n] += go * (off.u * ddx[n * 3 + c] + off.v * ddy[n * 3 + c]);
                }
              }
            }
          }
        }
      }
  });
}

Image center_view(const LightField& L) { return L.view(ViewOffset{0, 0}); }

Image extract_epi(const LightField& L, EpiAxis axis, int index) {
  const AngularGrid& g = L.grid();
  if (axis == EpiAxis::horizontal) {
    require(index >= 0 && index < L.height(), "extract_epi: row " + std::to_string(index) + " out of range");
    Image epi(g.U, L.width(), 3);
    const int iv = g.index_v(0);
    for (int iu = 0; iu < g.U; ++iu)
      for (int x = 0; x < L.width(); ++x)
        for (int c = 0; c < 3; ++c) epi.at(iu, x, c) = L.at(iu, iv, index, x, c);
    return epi;
  }
  require(index >= 0 && index < L.width(), "extract_epi: column " + std::to_string(index) + " out of range");
  Image epi(g.V, L.height(), 3);
  const int iu = g.index_u(0);
  for (int iv = 0; iv < g.V; ++iv)
    for (int y = 0; y < L.height(); ++y)
      for (int c = 0; c < 3; ++c) epi.at(iv, y, c) = L.at(iu, iv, y, index, c);
  return epi;
}

namespace {

std::vector<double> gray_row(const Image& img, int row) {
  std::vector<double> out(static_cast<std::size_t>(img.width()));
  for (int x = 0; x < img.width(); ++x) {
    double s = 0.0;
    for (int c = 0; c < img.channels(); ++c) s += img.at(row, x, c);
    out[x] = s / img.channels();
  }
  return out;
}

double sample_row(const std::vector<double>& row, double x) {
  const auto a = bilinear_axis(x, static_cast<int>(row.size()));
  return row[a.i0] + a.t * (row[a.i1] - row[a.i0]);
}

}  // namespace

double epi_slope(const Image& epi, double max_slope) {
  const int n = epi.height();
  const int W = epi.width();
  require(n >= 2, "epi_slope: need at least two angular rows");
  const int center = (n - 1) / 2;
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < n; ++r) rows.push_back(gray_row(epi, r));
  {
    double mu = 0.0, var = 0.0;
    for (double v : rows[center]) mu += v;
    mu /= W;
    for (double v : rows[center]) var += (v - mu) * (v - mu);
    require(var / W > 1e-8, "epi_slope: EPI has no texture to measure");
  }
  auto cost = [&](double s) {
    double err = 0.0;
    long count = 0;
    for (int r = 0; r < n; ++r) {
      const int o = r - center;
      if (o == 0) continue;
      for (int x = 0; x < W; ++x) {
        const double xs = x + s * o;
        if (xs < 0.0 || xs > W - 1) continue;
        const double d = rows[r][x] - sample_row(rows[center], xs);
        err += d * d;
        ++count;
      }
    }
    return count > 0 ? err / count : std::numeric_limits<double>::infinity();
  };
  double best = 0.0, best_cost = cost(0.0);
  for (double s = -max_slope; s <= max_slope + 1e-12; s += 0.05) {
    const double c = cost(s);
    if (c < best_cost) best_cost = c, best = s;
  }
  const double lo = best - 0.05;
  for (double s = lo; s <= best + 0.05 + 1e-12; s += 0.001) {
    const double c = cost(s);
    if (c < best_cost) best_cost = c, best = s;
  }
  // Parabolic refinement around the discrete minimum.
  const double h = 0.001;
  const double cm = cost(best - h), cp = cost(best + h);
  const double denom = cm - 2 * best_cost + cp;
  if (denom > 0.0) best += 0.5 * h * (cm - cp) / denom;
  return best;
}

Image refocus(const LightField& L, double alpha) {
  require(std::isfinite(alpha), "refocus: alpha must be finite");
  const int H = L.height(), W = L.width();
  const AngularGrid& g = L.grid();
  Image out(H, W, 3);
  const std::size_t plane = static_cast<std::size_t>(H) * W * 3;
  for (int iu = 0; iu < g.U; ++iu)
    for (int iv = 0; iv < g.V; ++iv) {
      const ViewOffset off = g.offset(iu, iv);
      const double* base = L.tensor().data() + (static_cast<std::size_t>(iu) * g.V + iv) * plane;
      for (int y = 0; y < H; ++y) {
        const auto ay = bilinear_axis(y - alpha * off.v, H);
        for (int x = 0; x < W; ++x) {
          const auto ax = bilinear_axis(x - alpha * off.u, W);
          for (int c = 0; c < 3; ++c) out.at(y, x, c) += bilinear(base + c, H, W, 3, ay, ax).value;
        }
      }
    }
  const double inv = 1.0 / g.view_count();
  for (auto& v : out.tensor().values()) v *= inv;
  return out;
}

}  // namespace lfv
