#pragma once

// Self-supervised objective. Every term is a mean, so the default weights do
// not depend on resolution. Terms that compare warped images skip a
// kBorderMargin-wide frame where clamped sampling is unreliable; if an image is
// too small to have an interior, all pixels are used.
//
// Each loss has a value overload on plain containers and a differentiable
// overload taking the light field as an ad::Var [U,V,H,W,3].

#include <cstdint>
#include <string>

#include "lfv/autodiff.hpp"
#include "lfv/light_field.hpp"
#include "lfv/warp.hpp"

namespace lfv {

struct LossWeights {
  double photo = 1.0;
  double geo = 1.0;
  double temp = 0.5;
  double occ = 0.2;
  double bins = 2.0;
  double tv = 0.1;

  /// Throws on a negative or non-finite weight.
  void validate() const;
  static LossWeights zeros() { return {0, 0, 0, 0, 0, 0}; }
};

struct LossTerms {
  double photo = 0.0;
  double geo = 0.0;
  double temp = 0.0;
  double occ = 0.0;
  double bins = 0.0;
  double tv = 0.0;
};

struct LossReport {
  std::int64_t step = 0;
  double photo = 0.0;
  double geo = 0.0;
  double temp = 0.0;
  double occ = 0.0;
  double bins = 0.0;
  double tv = 0.0;
  double total = 0.0;

  /// "step=12 photo=... geo=... temp=... occ=... bins=... tv=... total=..."
  std::string to_record() const;
  static LossReport parse_record(const std::string& line);
};

LossReport total_self_loss(const LossTerms& terms, const LossWeights& weights, std::int64_t step = 0);

/// Mean |center(L) - I|.
double photometric_loss(const LightField& L, const Image& I);
ad::Var photometric_loss(const ad::Var& L, const Image& I);

/// Mean over views of the MAE between view u warped to the center and I.
double geometric_loss(const LightField& L, const Image& I, const DisparityMap& d);
ad::Var geometric_loss(const ad::Var& L, const Image& I, const DisparityMap& d);

/// Views are warped to the center, then by `flow_next_to_t` (flow from frame
/// t+1 to frame t) onto frame t+1 and compared with I_next.
double temporal_loss(const LightField& L, const Image& I_next, const DisparityMap& d,
                     const FlowField& flow_next_to_t);
ad::Var temporal_loss(const ad::Var& L, const Image& I_next, const DisparityMap& d, const FlowField& flow_next_to_t);

/// Per pixel and channel min(|L - cand_prev|, |L - cand_next|), averaged over
/// hole pixels. 0 when the mask is empty.
double disocclusion_loss(const LightField& L, const LightField& cand_prev, const LightField& cand_next,
                         const HoleMask& M);
ad::Var disocclusion_loss(const ad::Var& L, const LightField& cand_prev, const LightField& cand_next,
                          const HoleMask& M);

/// Symmetric chamfer between D and the disparity values, on at most
/// kBinsMaxPixels pixels drawn with a fixed seed.
inline constexpr int kBinsMaxPixels = 10000;
double bin_density_loss(const DisplacementVector& D, const DisparityMap& d);
ad::Var bin_density_loss(const ad::Var& D, const DisparityMap& d);

/// Mean |horizontal difference| + mean |vertical difference| over all views.
double tv_loss(const LightField& L);
ad::Var tv_loss(const ad::Var& L);

/// Mean |L_ref - L_gt| over every view.
double refinement_loss(const LightField& L_ref, const LightField& L_gt);
ad::Var refinement_loss(const ad::Var& L_ref, const LightField& L_gt);

/// Per-pixel weights for the margin-excluded reductions, [H*W] of 0/1.
std::vector<double> margin_weights(int h, int w, int margin = kBorderMargin);

}  // namespace lfv
