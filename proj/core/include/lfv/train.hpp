#pragma once

// Two-phase network training: self-supervised synthesis on monocular clips,
// then supervised refinement with the synthesis backbone frozen.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lfv/losses.hpp"
#include "lfv/networks.hpp"
#include "lfv/optim.hpp"
#include "lfv/scene.hpp"

namespace lfv {

enum class TrainPhase { selfsup, refine };

struct TrainConfig {
  TrainPhase phase = TrainPhase::selfsup;
  int epochs = 25;
  double lr = 1e-4;
  double weight_decay = 1e-3;
  int patience = 4;
  int crop_height = 176;
  int crop_width = 264;
  int sequence_length = 7;
  /// d = a z + b with a drawn from a_values and b uniform in [b_min, b_max].
  std::vector<double> a_values{0.8, 1.6, 2.4, 3.2};
  double b_min = 0.2;
  double b_max = 0.4;
  int angular_res = 7;
  /// Fraction of the dataset (taken from the end) held out for validation.
  double validation_fraction = 0.1;
  LossWeights weights;
  SynthesisConfig synthesis;
  DisplacementConfig displacement;
  RefinementConfig refinement;
  std::uint64_t seed = 0;

  /// Defaults for the given phase; refine uses 15 epochs, lr 1e-3, a = 1.2
  /// and b = 0.3.
  static TrainConfig defaults(TrainPhase phase);
  void validate() const;
  AngularGrid grid() const { return {angular_res, angular_res}; }
  /// Flat echo stored in checkpoints and logs.
  std::map<std::string, std::string> echo() const;
  /// Inverse of echo(); keys that are absent keep their defaults.
  static TrainConfig from_echo(const std::map<std::string, std::string>& m);
};

/// One monocular clip with its relative depth in [0,1] and center flows.
struct TrainSequence {
  std::vector<Image> frames;
  std::vector<DepthMap> depth;
  /// forward[t]: flow t -> t+1 on t's grid; backward[t]: t+1 -> t.
  std::vector<FlowField> forward;
  std::vector<FlowField> backward;

  int length() const { return static_cast<int>(frames.size()); }
};

/// Exact depth and flows from a generated scene.
TrainSequence sequence_from_scene(const SceneTruth& scene);
/// Crop-window video over a static light field; depth from a plane sweep on
/// the full light field, normalized over its range.
TrainSequence sequence_from_lf(const LightField& lf, int frames, std::uint64_t seed);
/// Each manifest entry is a light-field directory or grid PNG.
std::vector<TrainSequence> load_sequences(const std::string& manifest, const TrainConfig& cfg);

/// Light field with its relative depth, for refinement training.
struct RefinementSample {
  LightField lf;
  DepthMap depth;
};
RefinementSample refinement_sample(const LightField& lf);
std::vector<RefinementSample> load_refinement_samples(const std::string& manifest, const TrainConfig& cfg);

/// Synthesis network plus displacement head.
struct Backbone {
  SynthesisNet synth;
  DisplacementHead disp;

  explicit Backbone(const TrainConfig& cfg);
  nn::NamedParams parameters() const;
  /// F and D for one frame; returns the propagated recurrent state.
  std::pair<LightField, nn::RecurrentState> synthesize(const Image& prev, const Image& cur, const Image& next,
                                                       const DisparityMap& d, const AngularGrid& grid,
                                                       const nn::RecurrentState& state) const;
};

/// Light field per frame of a video: providers' disparity in, backbone,
/// optional refinement out. The recurrent state runs across the video.
std::vector<LightField> synthesize_video(const Backbone& net, const RefinementBlock* refine,
                                         const std::vector<Image>& frames, const std::vector<DisparityMap>& d,
                                         const AngularGrid& grid);

struct TrainOptions {
  /// Per-epoch checkpoints go here when set.
  std::string out_dir;
  /// Continue from this checkpoint.
  std::string resume_from;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  /// Training loss of every optimizer step, in order.
  std::vector<double> step_losses;
  std::vector<double> val_losses;
  std::vector<double> lrs;
  Checkpoint checkpoint;
};

/// Self-supervised phase. Throws on an empty dataset and DivergenceError on a
/// non-finite loss.
TrainResult train_selfsup(const std::vector<TrainSequence>& data, const TrainConfig& cfg,
                          const TrainOptions& opts = {});

/// Refinement phase with the backbone restored from `backbone` and frozen.
TrainResult train_refinement(const std::vector<RefinementSample>& data, const Checkpoint& backbone,
                             const TrainConfig& cfg, const TrainOptions& opts = {});

/// Restores backbone weights; throws when the architecture in the checkpoint
/// differs from `cfg`.
void load_backbone(const Checkpoint& ck, const TrainConfig& cfg, Backbone& net);
void load_refinement(const Checkpoint& ck, const TrainConfig& cfg, RefinementBlock& block);

/// Self-supervised objective of one sequence under fixed (a, b), averaged
/// over frames.
ad::Var sequence_loss(const Backbone& net, const TrainSequence& seq, double a, double b, const TrainConfig& cfg);

/// Backbone output for a single image with prev = next = I.
LightField backbone_single(const Backbone& net, const Image& I, const DisparityMap& d, const AngularGrid& grid);

}  // namespace lfv
