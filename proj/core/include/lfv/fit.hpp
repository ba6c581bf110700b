#pragma once

// Per-frame optimization of the tensor-display layers F and displacements D
// directly against the self-supervised objective, without a network.

#include <cstdint>
#include <optional>
#include <vector>

#include "lfv/light_field.hpp"
#include "lfv/losses.hpp"
#include "lfv/provider.hpp"

namespace lfv {

/// Raised when the objective turns non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

enum class FitInit { uniform, center_broadcast };

struct FitConfig {
  int iterations = 2000;
  /// Adam step size for F and for D.
  double step = 0.002;
  double d_step = 0.01;
  FitInit init = FitInit::center_broadcast;
  int n_layers = 3;
  int rank = 4;
  /// When set, D stays fixed at these values; otherwise it is initialized
  /// evenly over [min d - margin, max d + margin] and optimized.
  std::optional<DisplacementVector> fixed_displacements;
  double d_margin = 0.5;
  LossWeights weights;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything the objective needs for frame t. Optional parts are required
/// only when the matching weight is nonzero.
struct FitInputs {
  AngularGrid grid{5, 5};
  Image prev;
  Image cur;
  Image next;
  DisparityMap disparity;
  /// Flow from frame t+1 to frame t (temporal term).
  std::optional<FlowField> flow_next_to_cur;
  /// Adjacent frames pulled onto every view of frame t, and the holes left
  /// by forward splatting the current frame (disocclusion term).
  std::optional<LightField> cand_prev;
  std::optional<LightField> cand_next;
  std::optional<HoleMask> holes;
};

/// Collects frame t of `video` with depth and flows from `provider`. At the
/// ends of the video the missing neighbor is replaced by the existing one.
FitInputs make_fit_inputs(const Provider& provider, const std::vector<Image>& video, int t, AngularGrid grid,
                          const LossWeights& weights);

struct FitResult {
  TDRepresentation F;
  /// Sorted ascending; F's layers are permuted to match.
  DisplacementVector D;
  /// Terms at the returned (best) iterate.
  LossReport report;
  std::vector<double> trace;
  int best_iteration = 0;

  LightField synthesize(const AngularGrid& grid) const { return td_synthesize(F, D, grid); }
};

/// Adam on (F, D) with F projected to [0,1] after every step. Returns the
/// lowest-loss iterate. Throws DivergenceError on a non-finite loss.
FitResult direct_fit(const FitInputs& in, const FitConfig& cfg);

/// Loss terms of a given light field and displacements under `in`.
LossTerms evaluate_terms(const LightField& L, const DisplacementVector& D, const FitInputs& in,
                         const LossWeights& weights);

/// Initial layers and displacements exactly as direct_fit starts from them.
std::pair<TDRepresentation, DisplacementVector> initial_fit_state(const FitInputs& in, const FitConfig& cfg);

}  // namespace lfv
