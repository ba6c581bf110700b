#include "lfv/provider.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "lfv/io.hpp"
#include "sampling.hpp"

namespace lfv {

namespace fs = std::filesystem;

AffineDepthParams normalization_for(double min_disparity, double max_disparity) {
  const double a = max_disparity - min_disparity;
  return {a > 1e-12 ? a : 1.0, min_disparity};
}

namespace {

DepthMap normalize(const DisparityMap& d, const AffineDepthParams& p) {
  DepthMap z(d.height(), d.width());
  for (std::size_t i = 0; i < z.tensor().size(); ++i) z.tensor()[i] = (d.tensor()[i] - p.b) / p.a;
  return z;
}

void check_frame(int f, int frames, const char* who) {
  require(f >= 0 && f < frames, std::string(who) + ": frame " + std::to_string(f) + " out of range [0," +
                                    std::to_string(frames) + ")");
}

FlowField minus_parallax(FlowField f, const DisparityMap& d, ViewOffset u) {
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      f.dx(y, x) -= u.u * d.at(y, x);
      f.dy(y, x) -= u.v * d.at(y, x);
    }
  return f;
}

}  // namespace

// ---- scene oracle -------------------------------------------------------------

SceneOracleProvider::SceneOracleProvider(std::shared_ptr<const SceneTruth> scene) : scene_(std::move(scene)) {
  require(scene_ != nullptr && !scene_->disparity.empty(), "SceneOracleProvider: scene has no frames");
  params_ = normalization_for(scene_->min_disparity(), scene_->max_disparity());
}

DepthMap SceneOracleProvider::depth(int frame) const {
  check_frame(frame, frames(), "SceneOracleProvider");
  return normalize(scene_->disparity[static_cast<std::size_t>(frame)], params_);
}

FlowField SceneOracleProvider::flow(FrameRef a, FrameRef b) const {
  check_frame(a.frame, frames(), "SceneOracleProvider");
  check_frame(b.frame, frames(), "SceneOracleProvider");
  if (b.view == ViewOffset{}) return scene_->view_to_center_flow(a.frame, a.view, b.frame);
  require(a.view == b.view, "SceneOracleProvider: flow between different side views is not supported");
  return scene_->view_flow(a.frame, a.view, b.frame);
}

// ---- cropped LF video ---------------------------------------------------------

CropVideoProvider::CropVideoProvider(std::shared_ptr<const LfVideo> video, std::vector<DisparityMap> disparity)
    : video_(std::move(video)), disparity_(std::move(disparity)) {
  require(video_ != nullptr && !video_->frames.empty(), "CropVideoProvider: empty video");
  require(disparity_.size() == video_->frames.size(), "CropVideoProvider: one disparity map per frame required");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& d : disparity_) {
    lo = std::min(lo, d.min());
    hi = std::max(hi, d.max());
  }
  params_ = normalization_for(lo, hi);
}

DepthMap CropVideoProvider::depth(int frame) const {
  check_frame(frame, frames(), "CropVideoProvider");
  return normalize(disparity_[static_cast<std::size_t>(frame)], params_);
}

FlowField CropVideoProvider::flow(FrameRef a, FrameRef b) const {
  check_frame(a.frame, frames(), "CropVideoProvider");
  check_frame(b.frame, frames(), "CropVideoProvider");
  const FlowField center = video_->flow(a.frame, b.frame);
  if (a.view == b.view) return center;
  require(b.view == ViewOffset{}, "CropVideoProvider: flow between different side views is not supported");
  return compose_view_flow(disparity_[static_cast<std::size_t>(a.frame)], center, a.view);
}

// ---- files --------------------------------------------------------------------

FileProvider::FileProvider(std::string depth_dir, std::string flow_dir, int frames, AffineDepthParams params)
    : depth_dir_(std::move(depth_dir)), flow_dir_(std::move(flow_dir)), frames_(frames), params_(params) {
  require(frames_ >= 1, "FileProvider: frames must be >= 1");
  require(fs::is_directory(depth_dir_), "FileProvider: depth directory '" + depth_dir_ + "' does not exist");
  require(fs::is_directory(flow_dir_), "FileProvider: flow directory '" + flow_dir_ + "' does not exist");
}

std::string FileProvider::depth_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "depth_%03d.pfm", frame);
  return buf;
}

std::string FileProvider::flow_name(int from, int to) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "flow_%03d_%03d.flo", from, to);
  return buf;
}

DepthMap FileProvider::depth(int frame) const {
  check_frame(frame, frames_, "FileProvider");
  const auto path = fs::path(depth_dir_) / depth_name(frame);
  require(fs::exists(path), "FileProvider: missing depth file '" + path.string() + "'");
  Tensor t = read_pfm(path.string());
  require(t.dim(2) == 1, "FileProvider: depth file '" + path.string() + "' must have one channel");
  return DepthMap(t.reshaped({t.dim(0), t.dim(1)}));
}

FlowField FileProvider::flow(FrameRef a, FrameRef b) const {
  check_frame(a.frame, frames_, "FileProvider");
  check_frame(b.frame, frames_, "FileProvider");
  const auto path = fs::path(flow_dir_) / flow_name(a.frame, b.frame);
  require(fs::exists(path), "FileProvider: missing flow file '" + path.string() + "'");
  FlowField center = read_flo(path.string());
  if (a.view == ViewOffset{}) return center;
  const DisparityMap d = disparity(a.frame);
  require(d.height() == center.height() && d.width() == center.width(),
          "FileProvider: depth and flow sizes differ for frame " + std::to_string(a.frame));
  FlowField to_center = compose_view_flow(d, center, a.view);
  if (b.view == ViewOffset{}) return to_center;
  require(a.view == b.view, "FileProvider: flow between different side views is not supported");
  // Same view in another frame: the center motion of the scene point seen there.
  return minus_parallax(std::move(to_center), d, a.view);
}

void export_provider_files(const Provider& p, const std::string& depth_dir, const std::string& flow_dir) {
  fs::create_directories(depth_dir);
  fs::create_directories(flow_dir);
  for (int t = 0; t < p.frames(); ++t) {
    write_pfm((fs::path(depth_dir) / FileProvider::depth_name(t)).string(), p.depth(t).tensor());
    if (t + 1 < p.frames()) {
      write_flo((fs::path(flow_dir) / FileProvider::flow_name(t, t + 1)).string(), p.flow({t, {}}, {t + 1, {}}));
      write_flo((fs::path(flow_dir) / FileProvider::flow_name(t + 1, t)).string(), p.flow({t + 1, {}}, {t, {}}));
    }
  }
}

// ---- plane sweep --------------------------------------------------------------

DisparityMap estimate_disparity(const LightField& L, double lo, double hi, double step, int window) {
  require(hi >= lo && step > 0.0 && window >= 1, "estimate_disparity: bad sweep parameters");
  const auto& g = L.grid();
  const int H = L.height(), W = L.width();
  const Image center = center_view(L);
  const std::size_t n = static_cast<std::size_t>(H) * W;
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  DisparityMap d(H, W, 0.0);
  std::vector<double> cost(n), integral(static_cast<std::size_t>(H + 1) * (W + 1));
  const int r = window / 2;
  const int steps = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int s = 0; s <= steps; ++s) {
    const double delta = lo + s * step;
    std::fill(cost.begin(), cost.end(), 0.0);
    for (int iu = 0; iu < g.U; ++iu)
      for (int iv = 0; iv < g.V; ++iv) {
        const ViewOffset o = g.offset(iu, iv);
        if (o.u == 0 && o.v == 0) continue;
        const double* view = L.tensor().data() + L.index(iu, iv, 0, 0, 0);
        for (int y = 0; y < H; ++y) {
          const auto ay = detail::bilinear_axis(y - o.v * delta, H);
          for (int x = 0; x < W; ++x) {
            const auto ax = detail::bilinear_axis(x - o.u * delta, W);
            double e = 0.0;
            for (int c = 0; c < 3; ++c) e += std::abs(detail::bilinear(view + c, H, W, 3, ay, ax).value - center.at(y, x, c));
            cost[static_cast<std::size_t>(y) * W + x] += e;
          }
        }
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        integral[static_cast<std::size_t>(y + 1) * (W + 1) + x + 1] = cost[static_cast<std::size_t>(y) * W + x] +
                                                                      integral[static_cast<std::size_t>(y) * (W + 1) + x + 1] +
                                                                      integral[static_cast<std::size_t>(y + 1) * (W + 1) + x] -
                                                                      integral[static_cast<std::size_t>(y) * (W + 1) + x];
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int y0 = std::max(0, y - r), y1 = std::min(H, y + r + 1);
        const int x0 = std::max(0, x - r), x1 = std::min(W, x + r + 1);
        auto I = [&](int yy, int xx) { return integral[static_cast<std::size_t>(yy) * (W + 1) + xx]; };
        const double box = (I(y1, x1) - I(y0, x1) - I(y1, x0) + I(y0, x0)) / ((y1 - y0) * (x1 - x0));
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (box < best[i] - 1e-12) {
          best[i] = box;
          d.at(y, x) = delta;
        }
      }
  }
  return d;
}

}  // namespace lfv
