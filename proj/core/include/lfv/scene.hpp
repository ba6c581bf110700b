#pragma once

// Procedural layered scenes with exact ground truth, and LF-video simulation
// by sliding a crop window over a static light field.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "lfv/light_field.hpp"
#include "lfv/warp.hpp"

namespace lfv {

enum class Silhouette { full, rect, disc };

/// One fronto-parallel layer. Layer content lives in its own coordinate
/// frame; view (u,v) of frame t shows layer point q = p + (u,v)*disparity -
/// t*velocity at pixel p.
struct SceneLayer {
  /// Optional image texture (at least canvas-sized). Empty = procedural
  /// sinusoid texture seeded from the scene seed and layer index.
  Image texture;
  double disparity = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  Silhouette shape = Silhouette::full;
  /// Silhouette center and half extents in layer coordinates; a disc uses
  /// half_w as its radius.
  double cx = 0.0;
  double cy = 0.0;
  double half_w = 0.0;
  double half_h = 0.0;
};

struct SyntheticSceneSpec {
  /// Sorted by ascending disparity: index 0 is drawn first (farthest) and
  /// must have a full silhouette so every pixel is covered.
  std::vector<SceneLayer> layers;
  int frames = 1;
  int height = 64;
  int width = 64;
  AngularGrid grid{5, 5};
  std::uint64_t seed = 0;

  /// Throws on an empty or unsorted layer list, bad sizes, or a texture
  /// smaller than the canvas.
  void validate() const;
};

/// Full background at disparities[0]; each further layer is a centered
/// square that shrinks with the layer index. velocities may be empty (static)
/// or hold one (vx, vy) per layer.
SyntheticSceneSpec layered_scene(const std::vector<double>& disparities, int frames, int height, int width,
                                 AngularGrid grid, std::uint64_t seed,
                                 const std::vector<std::pair<double, double>>& velocities = {});

class SceneTruth {
 public:
  SceneTruth() = default;
  explicit SceneTruth(SyntheticSceneSpec spec);

  const SyntheticSceneSpec& spec() const { return spec_; }
  int frames() const { return spec_.frames; }
  const AngularGrid& grid() const { return spec_.grid; }

  std::vector<LightField> lf;
  std::vector<Image> center;
  std::vector<DisparityMap> disparity;
  /// Splat-independent disocclusion masks: a view pixel is a hole when the
  /// layer it shows is not visible at its center correspondence.
  std::vector<HoleMask> holes;

  /// Index of the front-most layer covering pixel (x, y) of view u in frame
  /// t. Coordinates may be fractional or out of the canvas.
  int visible_layer(int t, ViewOffset u, double y, double x) const;

  /// Center frame t to center frame s.
  FlowField center_flow(int t, int s) const;
  /// View u of frame t to the center view of frame s.
  FlowField view_to_center_flow(int t, ViewOffset u, int s) const;
  /// View u of frame t to view u of frame s.
  FlowField view_flow(int t, ViewOffset u, int s) const;

  /// Smallest and largest layer disparity.
  double min_disparity() const;
  double max_disparity() const;

  /// Color channel c of layer k at layer coordinates (qx, qy).
  double texel(int k, double qy, double qx, int c) const;

 private:
  bool covers(int k, double qy, double qx) const;

  SyntheticSceneSpec spec_;
  // Procedural texture terms per layer: (fy, fx, phase, weight per channel).
  struct Wave {
    double fy, fx, phase;
    double w[3];
  };
  std::vector<std::vector<Wave>> waves_;
  std::vector<std::array<double, 3>> base_;
};

/// Renders every frame and view. Throws via SyntheticSceneSpec::validate.
SceneTruth generate_scene(const SyntheticSceneSpec& spec);

struct VideoSimConfig {
  int frames = 8;
  /// Crop size; 0 selects the largest size that fits the path.
  int crop_height = 0;
  int crop_width = 0;
  /// Per-frame integer crop step; unset draws one from the seed with each
  /// component in [-max_step, max_step].
  std::optional<std::pair<int, int>> step;
  int max_step = 2;
  std::uint64_t seed = 0;
};

struct LfVideo {
  std::vector<LightField> frames;
  std::vector<Image> center;
  int origin_x = 0;
  int origin_y = 0;
  int step_x = 0;
  int step_y = 0;

  /// Uniform flow from frame t to frame s: the content moves against the
  /// crop window, -(s - t) * step.
  FlowField flow(int t, int s) const;
};

/// Slides a crop window along a straight path with a constant integer step
/// per frame. Throws if the path leaves the light field.
LfVideo simulate_lf_video(const LightField& lf, const VideoSimConfig& cfg);

}  // namespace lfv
