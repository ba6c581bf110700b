#include "lfv/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sampling.hpp"

namespace lfv {

using detail::bilinear;
using detail::bilinear_axis;

DepthMap::DepthMap(Tensor t) : t_(std::move(t)) {
  require(t_.rank() == 2, "depth map must be [H,W], got " + shape_str(t_.shape()));
}

DisparityMap::DisparityMap(Tensor t) : t_(std::move(t)) {
  require(t_.rank() == 2, "disparity map must be [H,W], got " + shape_str(t_.shape()));
}

double DisparityMap::min() const { return *std::min_element(t_.values().begin(), t_.values().end()); }
double DisparityMap::max() const { return *std::max_element(t_.values().begin(), t_.values().end()); }

FlowField::FlowField(int h, int w, double dx, double dy) : t_({h, w, 2}) {
  for (std::size_t i = 0; i < t_.size(); i += 2) {
    t_[i] = dx;
    t_[i + 1] = dy;
  }
}

FlowField::FlowField(Tensor t) : t_(std::move(t)) {
  require(t_.rank() == 3 && t_.dim(2) == 2, "flow field must be [H,W,2], got " + shape_str(t_.shape()));
}

HoleMask::HoleMask(AngularGrid g, int h, int w)
    : grid(g), height(h), width(w), bits(static_cast<std::size_t>(g.U) * g.V * h * w, 0) {}

std::size_t HoleMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

DisparityMap depth_to_disparity(const DepthMap& z, const AffineDepthParams& params) {
  DisparityMap d(z.height(), z.width());
  for (std::size_t i = 0; i < d.tensor().size(); ++i) {
    require(std::isfinite(z.tensor()[i]), "depth_to_disparity: non-finite depth");
    d.tensor()[i] = params.a * z.tensor()[i] + params.b;
  }
  return d;
}

namespace {

Tensor inverse_warp_kernel(const Tensor& img, const Tensor& disp) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  Tensor out(img.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      const auto ax = bilinear_axis(x + disp[p * 2], W);
      const auto ay = bilinear_axis(y + disp[p * 2 + 1], H);
      for (int c = 0; c < C; ++c) out[p * C + c] = bilinear(img.data() + c, H, W, C, ay, ax).value;
    }
  return out;
}

void check_warp_shapes(const Tensor& img, const Tensor& disp) {
  require(img.rank() == 3, "inverse_warp: image must be [H,W,C]");
  require(disp.rank() == 3 && disp.dim(2) == 2 && disp.dim(0) == img.dim(0) && disp.dim(1) == img.dim(1),
          "inverse_warp: displacement " + shape_str(disp.shape()) + " does not match image " +
              shape_str(img.shape()));
}

}  // namespace

Image inverse_warp(const Image& img, const FlowField& displacement) {
  check_warp_shapes(img.tensor(), displacement.tensor());
  return Image(inverse_warp_kernel(img.tensor(), displacement.tensor()));
}

ad::Var inverse_warp(const ad::Var& img, const ad::Var& displacement) {
  check_warp_shapes(img.value(), displacement.value());
  Tensor out = inverse_warp_kernel(img.value(), displacement.value());
  return ad::make_op(std::move(out), {img, displacement}, [](ad::Node& self) {
    ad::Node& pi = *self.parents[0];
    ad::Node& pd = *self.parents[1];
    const Tensor& I = pi.value;
    const Tensor& disp = pd.value;
    const int H = I.dim(0), W = I.dim(1), C = I.dim(2);
    double* gi = pi.requires_grad ? pi.grad_buffer().data() : nullptr;
    double* gd = pd.requires_grad ? pd.grad_buffer().data() : nullptr;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const auto ax = bilinear_axis(x + disp[p * 2], W);
        const auto ay = bilinear_axis(y + disp[p * 2 + 1], H);
        for (int c = 0; c < C; ++c) {
          const double g = self.grad[p * C + c];
          if (g == 0.0) continue;
          if (gi) detail::bilinear_scatter(gi + c, W, C, ay, ax, g);
          if (gd) {
            const auto s = bilinear(I.data() + c, H, W, C, ay, ax);
            gd[p * 2] += g * s.dx;
            gd[p * 2 + 1] += g * s.dy;
          }
        }
      }
  });
}

FlowField sai_to_center_displacement(ViewOffset u, const DisparityMap& d) {
  FlowField f(d.height(), d.width());
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x) {
      f.dx(y, x) = -u.u * d.at(y, x);
      f.dy(y, x) = -u.v * d.at(y, x);
    }
  return f;
}

Image warp_sai_to_center(const LightField& L, ViewOffset u, const DisparityMap& d) {
  require(L.grid().contains(u), "warp_sai_to_center: view offset outside the angular grid");
  require(d.height() == L.height() && d.width() == L.width(), "warp_sai_to_center: disparity size mismatch");
  return inverse_warp(L.view(u), sai_to_center_displacement(u, d));
}

SplatResult forward_splat_disparity(const Image& I, const DisparityMap& d, ViewOffset u) {
  const int H = I.height(), W = I.width(), C = I.channels();
  require(d.height() == H && d.width() == W, "forward_splat_disparity: disparity size mismatch");
  constexpr double kTapEps = 1e-9;
  constexpr double kDepthTolerance = 0.5;
  constexpr double kHoleWeight = 0.5;

  struct Tap {
    int y, x;
    double w;
  };
  auto taps = [&](int y, int x, Tap out[4]) {
    const double ty = y - u.v * d.at(y, x);
    const double tx = x - u.u * d.at(y, x);
    const int y0 = static_cast<int>(std::floor(ty)), x0 = static_cast<int>(std::floor(tx));
    const double fy = ty - y0, fx = tx - x0;
    out[0] = {y0, x0, (1 - fy) * (1 - fx)};
    out[1] = {y0, x0 + 1, (1 - fy) * fx};
    out[2] = {y0 + 1, x0, fy * (1 - fx)};
    out[3] = {y0 + 1, x0 + 1, fy * fx};
  };
  auto valid = [&](const Tap& t) { return t.w > kTapEps && t.y >= 0 && t.y < H && t.x >= 0 && t.x < W; };

  std::vector<double> zbuf(static_cast<std::size_t>(H) * W, -std::numeric_limits<double>::infinity());
  Tap tp[4];
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      taps(y, x, tp);
      for (const auto& t : tp)
        if (valid(t)) {
          auto& z = zbuf[static_cast<std::size_t>(t.y) * W + t.x];
          z = std::max(z, d.at(y, x));
        }
    }

  std::vector<double> weight(static_cast<std::size_t>(H) * W, 0.0);
  Image acc(H, W, C);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      taps(y, x, tp);
      for (const auto& t : tp) {
        if (!valid(t)) continue;
        const std::size_t q = static_cast<std::size_t>(t.y) * W + t.x;
        if (d.at(y, x) < zbuf[q] - kDepthTolerance) continue;
        weight[q] += t.w;
        for (int c = 0; c < C; ++c) acc.at(t.y, t.x, c) += t.w * I.at(y, x, c);
      }
    }

  SplatResult res{Image(H, W, C), std::vector<std::uint8_t>(static_cast<std::size_t>(H) * W, 0)};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t q = static_cast<std::size_t>(y) * W + x;
      if (weight[q] < kHoleWeight) res.holes[q] = 1;
      if (weight[q] > 0.0)
        for (int c = 0; c < C; ++c) res.image.at(y, x, c) = acc.at(y, x, c) / weight[q];
    }
  return res;
}

HoleMask disocclusion_mask(const Image& I, const DisparityMap& d, const AngularGrid& grid) {
  HoleMask m(grid, I.height(), I.width());
  for (int iu = 0; iu < grid.U; ++iu)
    for (int iv = 0; iv < grid.V; ++iv) {
      const auto s = forward_splat_disparity(I, d, grid.offset(iu, iv));
      std::copy(s.holes.begin(), s.holes.end(), m.bits.begin() + static_cast<std::ptrdiff_t>(m.index(iu, iv, 0, 0)));
    }
  return m;
}

Image flow_warp_candidate(const Image& I_adj, const FlowField& flow_target_to_adj) {
  return inverse_warp(I_adj, flow_target_to_adj);
}

FlowField compose_view_flow(const DisparityMap& d, const FlowField& center_flow, ViewOffset u) {
  const int H = d.height(), W = d.width();
  require(center_flow.height() == H && center_flow.width() == W, "compose_view_flow: size mismatch");
  FlowField out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double sx = u.u * d.at(y, x), sy = u.v * d.at(y, x);
      const auto ax = bilinear_axis(x + sx, W);
      const auto ay = bilinear_axis(y + sy, H);
      out.dx(y, x) = sx + bilinear(center_flow.tensor().data(), H, W, 2, ay, ax).value;
      out.dy(y, x) = sy + bilinear(center_flow.tensor().data() + 1, H, W, 2, ay, ax).value;
    }
  return out;
}

}  // namespace lfv
