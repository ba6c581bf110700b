#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lfv/autodiff.hpp"
#include "lfv/tensor.hpp"

namespace lfv {

/// Signed angular offset of a sub-aperture view; (0,0) is the center view.
/// `u` moves sampling along x, `v` along y.
struct ViewOffset {
  int u = 0;
  int v = 0;
  friend bool operator==(const ViewOffset&, const ViewOffset&) = default;
};

/// Odd-sized U x V grid of views with offsets -(U-1)/2 .. +(U-1)/2.
struct AngularGrid {
  int U = 1;
  int V = 1;

  AngularGrid() = default;
  AngularGrid(int u, int v);
  static AngularGrid square(int n) { return {n, n}; }

  int view_count() const { return U * V; }
  ViewOffset offset(int iu, int iv) const { return {iu - (U - 1) / 2, iv - (V - 1) / 2}; }
  int index_u(int u) const { return u + (U - 1) / 2; }
  int index_v(int v) const { return v + (V - 1) / 2; }
  bool contains(ViewOffset o) const;
  std::vector<ViewOffset> offsets() const;
  friend bool operator==(const AngularGrid&, const AngularGrid&) = default;
};

/// [H, W, C] image, channel-last.
class Image {
 public:
  Image() = default;
  Image(int h, int w, int c = 3, double fill = 0.0);
  explicit Image(Tensor t);

  int height() const { return t_.dim(0); }
  int width() const { return t_.dim(1); }
  int channels() const { return t_.dim(2); }
  double& at(int y, int x, int c) { return t_[(static_cast<std::size_t>(y) * width() + x) * channels() + c]; }
  double at(int y, int x, int c) const { return t_[(static_cast<std::size_t>(y) * width() + x) * channels() + c]; }

  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }
  bool same_size(const Image& o) const { return t_.shape() == o.t_.shape(); }

 private:
  Tensor t_;
};

/// U x V sub-aperture images stored as [U, V, H, W, 3] with values in [0,1].
/// Storage index (iu, iv) maps to offset (iu - (U-1)/2, iv - (V-1)/2).
class LightField {
 public:
  LightField() = default;
  LightField(AngularGrid grid, int h, int w, double fill = 0.0);
  /// Takes a [U, V, H, W, 3] tensor; throws if U or V is even or values leave [0,1].
  LightField(AngularGrid grid, Tensor t);

  const AngularGrid& grid() const { return grid_; }
  int height() const { return t_.dim(2); }
  int width() const { return t_.dim(3); }

  double& at(int iu, int iv, int y, int x, int c) { return t_[index(iu, iv, y, x, c)]; }
  double at(int iu, int iv, int y, int x, int c) const { return t_[index(iu, iv, y, x, c)]; }

  Image view(int iu, int iv) const;
  Image view(ViewOffset o) const;
  void set_view(int iu, int iv, const Image& img);

  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }

  std::size_t index(int iu, int iv, int y, int x, int c) const {
    return ((((static_cast<std::size_t>(iu) * grid_.V + iv) * height() + y) * width() + x) * 3) + c;
  }

 private:
  AngularGrid grid_;
  Tensor t_;
};

/// Low-rank tensor-display layers f_n^r stored [N, R, H, W, 3]. Storage layer
/// i corresponds to the symmetric layer index n = i - (N-1)/2.
class TDRepresentation {
 public:
  TDRepresentation() = default;
  TDRepresentation(int n_layers, int rank, int h, int w, double fill = 0.0);
  explicit TDRepresentation(Tensor t);

  int layers() const { return t_.dim(0); }
  int rank() const { return t_.dim(1); }
  int height() const { return t_.dim(2); }
  int width() const { return t_.dim(3); }
  double& at(int n, int r, int y, int x, int c) { return t_[index(n, r, y, x, c)]; }
  double at(int n, int r, int y, int x, int c) const { return t_[index(n, r, y, x, c)]; }
  std::size_t index(int n, int r, int y, int x, int c) const {
    return ((((static_cast<std::size_t>(n) * rank() + r) * height() + y) * width() + x) * 3) + c;
  }
  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }

  /// Symmetric layer index for storage layer i.
  static int layer_index(int i, int n_layers) { return i - (n_layers - 1) / 2; }

 private:
  Tensor t_;
};

/// Per-layer displacement D_n in pixels per unit angular offset.
struct DisplacementVector {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
  double operator[](int i) const { return values[static_cast<std::size_t>(i)]; }
  bool is_sorted() const;
  void sort();
  /// D_i = i - (N-1)/2: the fixed, uniformly spaced tensor-display model.
  static DisplacementVector uniform(int n_layers);
};

// ---- synthesis ---------------------------------------------------------------

/// L(x,y,u,v) = clip01( Σ_r Π_n f_n^r(x + D_n u, y + D_n v) ), bilinear with
/// border clamping.
LightField td_synthesize(const TDRepresentation& F, const DisplacementVector& D, const AngularGrid& grid);

/// Fixed-spacing model: td_synthesize with DisplacementVector::uniform(N).
LightField td_synthesize_uniform(const TDRepresentation& F, const AngularGrid& grid);

/// Raw kernel behind both entry points. `F` is [N,R,H,W,3]; writes the
/// unclipped rank sum into `raw` when non-null. Output is [U,V,H,W,3] clipped.
Tensor td_synthesize_kernel(const Tensor& F, std::span<const double> D, const AngularGrid& grid, Tensor* raw);

/// Differentiable synthesis: F [N,R,H,W,3], D [N] -> [U,V,H,W,3]. Gradients
/// flow to both F and D; the forward pass is td_synthesize_kernel.
ad::Var td_synthesize(const ad::Var& F, const ad::Var& D, const AngularGrid& grid);

// ---- slicing and rendering ---------------------------------------------------

Image center_view(const LightField& L);

enum class EpiAxis { horizontal, vertical };

/// Horizontal: row `index` of every view with v = 0, stacked as [U, W, 3].
/// Vertical: column `index` of every view with u = 0, stacked as [V, H, 3].
Image extract_epi(const LightField& L, EpiAxis axis, int index);

/// Estimates s such that EPI row a (offset o_a from the center row) matches
/// the center row shifted by s * o_a, i.e. the disparity of the dominant
/// structure. Throws if the EPI has fewer than two rows or no texture.
double epi_slope(const Image& epi, double max_slope = 8.0);

/// Shift-and-add refocus: mean over views of L(u,v) sampled at
/// (x - alpha*u, y - alpha*v). Content at disparity alpha comes out sharp.
Image refocus(const LightField& L, double alpha);

}  // namespace lfv
