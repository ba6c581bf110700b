#include "lfv/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "sampling.hpp"

namespace lfv {

void SyntheticSceneSpec::validate() const {
  require(!layers.empty(), "scene: at least one layer is required");
  require(frames >= 1 && height >= 2 && width >= 2, "scene: frames >= 1 and a canvas of at least 2x2 required");
  require(layers.front().shape == Silhouette::full, "scene: the back layer must have a full silhouette");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& L = layers[k];
    require(std::isfinite(L.disparity) && std::isfinite(L.vx) && std::isfinite(L.vy), "scene: non-finite layer");
    if (k > 0)
      require(layers[k - 1].disparity <= L.disparity, "scene: layers must be sorted by ascending disparity");
    if (!L.texture.tensor().empty())
      require(L.texture.height() >= height && L.texture.width() >= width && L.texture.channels() == 3,
              "scene: texture of layer " + std::to_string(k) + " is smaller than the " + std::to_string(height) +
                  "x" + std::to_string(width) + " canvas");
  }
}

SyntheticSceneSpec layered_scene(const std::vector<double>& disparities, int frames, int height, int width,
                                 AngularGrid grid, std::uint64_t seed,
                                 const std::vector<std::pair<double, double>>& velocities) {
  require(!disparities.empty(), "layered_scene: at least one disparity required");
  require(velocities.empty() || velocities.size() == disparities.size(),
          "layered_scene: one velocity per layer required");
  SyntheticSceneSpec spec;
  spec.frames = frames;
  spec.height = height;
  spec.width = width;
  spec.grid = grid;
  spec.seed = seed;
  for (std::size_t k = 0; k < disparities.size(); ++k) {
    SceneLayer L;
    L.disparity = disparities[k];
    if (!velocities.empty()) std::tie(L.vx, L.vy) = velocities[k];
    if (k > 0) {
      // Half-integer edges keep pixel membership unambiguous under integer shifts.
      const double frac = std::max(0.08, 0.3 - 0.08 * static_cast<double>(k - 1));
      L.shape = Silhouette::rect;
      L.cx = std::floor(width / 2.0) - 0.5;
      L.cy = std::floor(height / 2.0) - 0.5;
      L.half_w = std::floor(frac * width) + 0.5;
      L.half_h = std::floor(frac * height) + 0.5;
    }
    spec.layers.push_back(std::move(L));
  }
  return spec;
}

SceneTruth::SceneTruth(SyntheticSceneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t K = spec_.layers.size();
  waves_.resize(K);
  base_.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::mt19937_64 rng(spec_.seed * 1000003ull + k * 7919ull + 17ull);
    std::uniform_real_distribution<double> freq(0.08, 0.45), sign(-1.0, 1.0), phase(0.0, 6.283185307179586),
        weight(0.05, 0.12), base(0.3, 0.7);
    for (auto& b : base_[k]) b = base(rng);
    for (int i = 0; i < 4; ++i) {
      Wave w{};
      w.fy = freq(rng) * (sign(rng) < 0 ? -1.0 : 1.0);
      w.fx = freq(rng) * (sign(rng) < 0 ? -1.0 : 1.0);
      w.phase = phase(rng);
      for (auto& c : w.w) c = weight(rng);
      waves_[k].push_back(w);
    }
  }
}

bool SceneTruth::covers(int k, double qy, double qx) const {
  const auto& L = spec_.layers[static_cast<std::size_t>(k)];
  switch (L.shape) {
    case Silhouette::full:
      return true;
    case Silhouette::rect:
      return std::abs(qx - L.cx) <= L.half_w && std::abs(qy - L.cy) <= L.half_h;
    case Silhouette::disc:
      return (qx - L.cx) * (qx - L.cx) + (qy - L.cy) * (qy - L.cy) <= L.half_w * L.half_w;
  }
  return false;
}

double SceneTruth::texel(int k, double qy, double qx, int c) const {
  const auto& L = spec_.layers[static_cast<std::size_t>(k)];
  if (!L.texture.tensor().empty()) {
    const int th = L.texture.height(), tw = L.texture.width();
    const double oy = (th - spec_.height) / 2.0, ox = (tw - spec_.width) / 2.0;
    const auto ay = detail::bilinear_axis(qy + oy, th);
    const auto ax = detail::bilinear_axis(qx + ox, tw);
    return detail::bilinear(L.texture.tensor().data() + c, th, tw, 3, ay, ax).value;
  }
  double v = base_[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
  for (const auto& w : waves_[static_cast<std::size_t>(k)]) v += w.w[c] * std::sin(w.fy * qy + w.fx * qx + w.phase);
  return std::clamp(v, 0.0, 1.0);
}

int SceneTruth::visible_layer(int t, ViewOffset u, double y, double x) const {
  for (int k = static_cast<int>(spec_.layers.size()) - 1; k >= 0; --k) {
    const auto& L = spec_.layers[static_cast<std::size_t>(k)];
    const double qy = y + u.v * L.disparity - t * L.vy;
    const double qx = x + u.u * L.disparity - t * L.vx;
    if (covers(k, qy, qx)) return k;
  }
  return 0;
}

double SceneTruth::min_disparity() const { return spec_.layers.front().disparity; }
double SceneTruth::max_disparity() const { return spec_.layers.back().disparity; }

namespace {

template <class Fn>
FlowField flow_from_layers(int H, int W, Fn&& fn) {
  FlowField f(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const auto [dx, dy] = fn(y, x);
      f.dx(y, x) = dx;
      f.dy(y, x) = dy;
    }
  return f;
}

}  // namespace

FlowField SceneTruth::center_flow(int t, int s) const { return view_flow(t, {0, 0}, s); }

FlowField SceneTruth::view_to_center_flow(int t, ViewOffset u, int s) const {
  return flow_from_layers(spec_.height, spec_.width, [&](int y, int x) {
    const auto& L = spec_.layers[static_cast<std::size_t>(visible_layer(t, u, y, x))];
    return std::pair{u.u * L.disparity + (s - t) * L.vx, u.v * L.disparity + (s - t) * L.vy};
  });
}

FlowField SceneTruth::view_flow(int t, ViewOffset u, int s) const {
  return flow_from_layers(spec_.height, spec_.width, [&](int y, int x) {
    const auto& L = spec_.layers[static_cast<std::size_t>(visible_layer(t, u, y, x))];
    return std::pair{(s - t) * L.vx, (s - t) * L.vy};
  });
}

SceneTruth generate_scene(const SyntheticSceneSpec& spec) {
  SceneTruth S(spec);
  const int H = spec.height, W = spec.width, T = spec.frames;
  const auto& g = spec.grid;
  for (int t = 0; t < T; ++t) {
    LightField L(g, H, W);
    HoleMask holes(g, H, W);
    DisparityMap d(H, W);
    for (int iu = 0; iu < g.U; ++iu)
      for (int iv = 0; iv < g.V; ++iv) {
        const ViewOffset o = g.offset(iu, iv);
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const int k = S.visible_layer(t, o, y, x);
            const auto& layer = spec.layers[static_cast<std::size_t>(k)];
            const double qy = y + o.v * layer.disparity - t * layer.vy;
            const double qx = x + o.u * layer.disparity - t * layer.vx;
            for (int c = 0; c < 3; ++c) L.at(iu, iv, y, x, c) = S.texel(k, qy, qx, c);
            if (o.u == 0 && o.v == 0) d.at(y, x) = layer.disparity;
            // Center correspondence of this pixel on the layer it shows.
            const double cy = y + o.v * layer.disparity, cx = x + o.u * layer.disparity;
            const bool inside = cy >= 0.0 && cy <= H - 1 && cx >= 0.0 && cx <= W - 1;
            holes.at(iu, iv, y, x) = !inside || S.visible_layer(t, {0, 0}, cy, cx) != k;
          }
      }
    S.center.push_back(center_view(L));
    S.lf.push_back(std::move(L));
    S.disparity.push_back(std::move(d));
    S.holes.push_back(std::move(holes));
  }
  return S;
}

// ---- LF video simulation ----------------------------------------------------

FlowField LfVideo::flow(int t, int s) const {
  require(!frames.empty(), "LfVideo::flow: empty video");
  return FlowField(frames.front().height(), frames.front().width(), -(s - t) * static_cast<double>(step_x),
                   -(s - t) * static_cast<double>(step_y));
}

LfVideo simulate_lf_video(const LightField& lf, const VideoSimConfig& cfg) {
  require(cfg.frames >= 1, "simulate_lf_video: frames must be >= 1");
  require(cfg.max_step >= 0, "simulate_lf_video: max_step must be >= 0");
  const int H = lf.height(), W = lf.width(), T = cfg.frames;
  std::mt19937_64 rng(cfg.seed * 2654435761ull + 99ull);

  int sx, sy;
  if (cfg.step) {
    std::tie(sx, sy) = *cfg.step;
  } else {
    std::uniform_int_distribution<int> pick(-cfg.max_step, cfg.max_step);
    sx = pick(rng);
    sy = pick(rng);
  }
  const int reach_x = cfg.step ? std::abs(sx) : cfg.max_step;
  const int reach_y = cfg.step ? std::abs(sy) : cfg.max_step;
  const int ch = cfg.crop_height > 0 ? cfg.crop_height : H - (T - 1) * reach_y;
  const int cw = cfg.crop_width > 0 ? cfg.crop_width : W - (T - 1) * reach_x;
  require(ch >= 2 && cw >= 2, "simulate_lf_video: light field too small for the requested path");
  require(ch + (T - 1) * std::abs(sy) <= H && cw + (T - 1) * std::abs(sx) <= W,
          "simulate_lf_video: crop path exits the light field bounds");

  auto origin = [&](int extent, int crop, int step) {
    const int lo = std::max(0, -(T - 1) * step);
    const int hi = std::min(extent - crop, extent - crop - (T - 1) * step);
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  LfVideo out;
  out.step_x = sx;
  out.step_y = sy;
  out.origin_y = origin(H, ch, sy);
  out.origin_x = origin(W, cw, sx);

  const auto& g = lf.grid();
  for (int t = 0; t < T; ++t) {
    const int y0 = out.origin_y + t * sy, x0 = out.origin_x + t * sx;
    LightField f(g, ch, cw);
    for (int iu = 0; iu < g.U; ++iu)
      for (int iv = 0; iv < g.V; ++iv)
        for (int y = 0; y < ch; ++y)
          for (int x = 0; x < cw; ++x)
            for (int c = 0; c < 3; ++c) f.at(iu, iv, y, x, c) = lf.at(iu, iv, y0 + y, x0 + x, c);
    out.center.push_back(center_view(f));
    out.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace lfv
