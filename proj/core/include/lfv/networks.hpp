#pragma once

#include <optional>

#include "lfv/light_field.hpp"
#include "lfv/nn.hpp"
#include "lfv/warp.hpp"

namespace lfv {

/// Stacks {I_prev, I_t, I_next, d} into the 10-channel network input [1,H,W,10].
ad::Var stack_inputs(const Image& I_prev, const Image& I_t, const Image& I_next, const DisparityMap& d);

// ---- synthesis network -------------------------------------------------------

struct SynthesisConfig {
  int base_width = 8;
  int stages = 4;
  int n_layers = 3;
  int rank = 12;
  int max_width = 64;
  std::uint64_t seed = 1;

  int output_channels() const { return n_layers * rank * 3; }
  void validate() const;
};

/// Strided conv encoder with skips, ConvLSTM at the bottleneck and an
/// upsampling decoder. Emits tensor-display layers squashed to [0,1].
class SynthesisNet {
 public:
  explicit SynthesisNet(const SynthesisConfig& cfg = {});

  /// `input` is [1,H,W,10]. Any H, W: the input is replicate-padded to a
  /// multiple of 2^stages and the output cropped back. Returns F [N,R,H,W,3].
  std::pair<ad::Var, nn::RecurrentState> forward(const ad::Var& input, const nn::RecurrentState& state) const;

  std::pair<TDRepresentation, nn::RecurrentState> synth_forward(const Image& I_prev, const Image& I_t,
                                                                const Image& I_next, const DisparityMap& d,
                                                                const nn::RecurrentState& state) const;

  const SynthesisConfig& config() const { return cfg_; }
  nn::NamedParams parameters() const;

 private:
  SynthesisConfig cfg_;
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> down_, down_mix_;
  nn::ConvLSTMCell lstm_;
  std::vector<nn::Conv2d> up_;
  nn::Conv2d head_;
};

// ---- displacement head -------------------------------------------------------

struct DisplacementConfig {
  int n_layers = 3;
  int width = 16;
  std::uint64_t seed = 2;
  /// Margin added on both sides of the disparity range.
  double margin = 0.5;
};

/// D_n = lo + (hi - lo) * (Σ_{m<n} w_m + w_n / 2) for positive widths summing to 1.
ad::Var widths_to_displacements(const ad::Var& widths, double lo, double hi);
DisplacementVector widths_to_displacements(const std::vector<double>& widths, double lo, double hi);

/// Conv features, attention pooling against a learned query, MLP, softmax
/// widths, cumulative midpoints over [min d - margin, max d + margin].
class DisplacementHead {
 public:
  explicit DisplacementHead(const DisplacementConfig& cfg = {});

  ad::Var forward(const ad::Var& input, const DisparityMap& d) const;
  DisplacementVector displacement_forward(const Image& I_prev, const Image& I_t, const Image& I_next,
                                          const DisparityMap& d) const;

  const DisplacementConfig& config() const { return cfg_; }
  nn::NamedParams parameters() const;

 private:
  DisplacementConfig cfg_;
  nn::Conv2d c1_, c2_;
  nn::Linear key_;
  ad::Var query_;  // [1, 1, width]
  nn::Linear fc1_, fc2_;
};

// ---- refinement block ----------------------------------------------------------

struct RefinementConfig {
  int patch_size = 32;
  int angular_res = 7;  // views per axis; the block expects angular_res^2 views
  int depth = 2;
  int heads = 2;
  int embed = 32;
  int enc_width = 8;
  int dec_width = 16;
  double mask_bias = 2.0;
  std::uint64_t seed = 3;

  void validate() const;
};

struct TokenCount {
  int sites = 0;     // P
  int per_site = 0;  // U^2 + 1
};

TokenCount count_tokens(const RefinementConfig& cfg, int H, int W);

struct RefinementVars {
  ad::Var refined;   // [U,V,H,W,3]
  ad::Var residual;  // [U,V,H,W,3]
  ad::Var mask;      // [U,V,H,W,1]
};

struct RefinementOutput {
  LightField refined;
  LightField residual;
  Tensor mask;  // [U,V,H,W]
};

/// L_ref = M * L + (1 - M) * L_res with M broadcast over channels.
/// L, L_res [U,V,H,W,3]; M [U,V,H,W,1].
ad::Var blend(const ad::Var& L, const ad::Var& L_res, const ad::Var& M);

class RefinementBlock {
 public:
  explicit RefinementBlock(const RefinementConfig& cfg = {});

  /// `mask_override`, when set, replaces the predicted mask with a constant.
  RefinementVars forward(const ad::Var& L, const Image& I_t, std::optional<double> mask_override = {}) const;
  RefinementOutput refine(const LightField& L, const Image& I_t, std::optional<double> mask_override = {}) const;

  /// Per-view decoder: tokens [B, h, w, E] -> [B, h*p, w*p, dec_width].
  ad::Var decode_tokens(const ad::Var& tokens) const;

  const RefinementConfig& config() const { return cfg_; }
  nn::NamedParams parameters() const;

 private:
  RefinementConfig cfg_;
  nn::Conv2d enc_in_, enc_res1_, enc_res2_;
  nn::Linear embed_;
  ad::Var pos_;  // [U^2 + 1, E]
  std::vector<nn::TransformerLayer> layers_;
  std::vector<nn::Conv2d> dec_;
  nn::Conv2d fuse_, out_;
};

}  // namespace lfv
