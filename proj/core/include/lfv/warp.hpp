#pragma once

// Geometric resampling.
//
// Conventions used throughout the library:
//  * Disparity d is in pixels per unit angular offset. A scene point at
//    disparity d seen at x in the center view appears at x - u*d in view u,
//    so view_u(x) = center(x + u*d). This is the sign under which a
//    tensor-display layer with displacement D_n reproduces a plane at
//    disparity D_n.
//  * A flow field "from A to B" lives on A's pixel grid and gives the motion
//    of each A pixel into B: A(p) ~ B(p + flow(p)). Hence
//    inverse_warp(B, flow_A_to_B) reconstructs A.

#include <cstdint>
#include <vector>

#include "lfv/autodiff.hpp"
#include "lfv/light_field.hpp"

namespace lfv {

/// Relative depth, unitless, nominally in [0,1]. [H, W].
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int h, int w, double fill = 0.0) : t_({h, w}, fill) {}
  explicit DepthMap(Tensor t);
  int height() const { return t_.dim(0); }
  int width() const { return t_.dim(1); }
  double& at(int y, int x) { return t_[static_cast<std::size_t>(y) * width() + x]; }
  double at(int y, int x) const { return t_[static_cast<std::size_t>(y) * width() + x]; }
  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }

 private:
  Tensor t_;
};

/// Disparity in pixels per unit angular offset. [H, W].
class DisparityMap {
 public:
  DisparityMap() = default;
  DisparityMap(int h, int w, double fill = 0.0) : t_({h, w}, fill) {}
  explicit DisparityMap(Tensor t);
  int height() const { return t_.dim(0); }
  int width() const { return t_.dim(1); }
  double& at(int y, int x) { return t_[static_cast<std::size_t>(y) * width() + x]; }
  double at(int y, int x) const { return t_[static_cast<std::size_t>(y) * width() + x]; }
  double min() const;
  double max() const;
  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }

 private:
  Tensor t_;
};

/// d = a*z + b.
struct AffineDepthParams {
  double a = 1.0;
  double b = 0.0;
};

/// Per-pixel (dx, dy) in pixels. [H, W, 2].
class FlowField {
 public:
  FlowField() = default;
  FlowField(int h, int w, double dx = 0.0, double dy = 0.0);
  explicit FlowField(Tensor t);
  int height() const { return t_.dim(0); }
  int width() const { return t_.dim(1); }
  double& dx(int y, int x) { return t_[(static_cast<std::size_t>(y) * width() + x) * 2]; }
  double& dy(int y, int x) { return t_[(static_cast<std::size_t>(y) * width() + x) * 2 + 1]; }
  double dx(int y, int x) const { return t_[(static_cast<std::size_t>(y) * width() + x) * 2]; }
  double dy(int y, int x) const { return t_[(static_cast<std::size_t>(y) * width() + x) * 2 + 1]; }
  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }

 private:
  Tensor t_;
};

/// Binary disocclusion mask over every view, [U, V, H, W]; 1 = hole.
struct HoleMask {
  AngularGrid grid;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  HoleMask() = default;
  HoleMask(AngularGrid g, int h, int w);
  std::uint8_t& at(int iu, int iv, int y, int x) { return bits[index(iu, iv, y, x)]; }
  std::uint8_t at(int iu, int iv, int y, int x) const { return bits[index(iu, iv, y, x)]; }
  std::size_t index(int iu, int iv, int y, int x) const {
    return ((static_cast<std::size_t>(iu) * grid.V + iv) * height + y) * width + x;
  }
  std::size_t count() const;
};

/// Pixels closer than this to the image border are excluded from loss and
/// metric reductions.
inline constexpr int kBorderMargin = 2;

DisparityMap depth_to_disparity(const DepthMap& z, const AffineDepthParams& params);

/// out(p) = img(p + displacement(p)), bilinear, border clamped.
Image inverse_warp(const Image& img, const FlowField& displacement);

/// Differentiable inverse warp: img [H,W,C], displacement [H,W,2].
ad::Var inverse_warp(const ad::Var& img, const ad::Var& displacement);

/// Displacement field that pulls view `u` back onto the center view:
/// -(u, v) * d(p).
FlowField sai_to_center_displacement(ViewOffset u, const DisparityMap& d);

/// View u resampled onto the center view using the center disparity.
Image warp_sai_to_center(const LightField& L, ViewOffset u, const DisparityMap& d);

struct SplatResult {
  Image image;
  /// [H, W], 1 where the target received total weight < 0.5.
  std::vector<std::uint8_t> holes;
};

/// Forward-splats I into view u: source p lands at p - u*d(p) with bilinear
/// weights; closer (larger disparity) contributions win per target pixel.
SplatResult forward_splat_disparity(const Image& I, const DisparityMap& d, ViewOffset u);

/// Splat-based hole mask for every view of the grid.
HoleMask disocclusion_mask(const Image& I, const DisparityMap& d, const AngularGrid& grid);

/// Candidate for a target view built from an adjacent frame:
/// inverse_warp(I_adj, flow from target view to I_adj).
Image flow_warp_candidate(const Image& I_adj, const FlowField& flow_target_to_adj);

/// Flow from view u of frame t to center frame s, composed from the center
/// disparity of frame t and the center flow t->s. Exact away from
/// disocclusions; used when no per-view flow source exists.
FlowField compose_view_flow(const DisparityMap& d, const FlowField& center_flow, ViewOffset u);

}  // namespace lfv
