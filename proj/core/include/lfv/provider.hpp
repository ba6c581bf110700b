#pragma once

// Depth and optical-flow sources. The pipeline only sees this interface; it
// stands in for a monocular depth network and a flow network.

#include <memory>
#include <string>

#include "lfv/scene.hpp"
#include "lfv/warp.hpp"

namespace lfv {

/// A frame of the video and, for flows, the view inside that frame's light
/// field. view (0,0) is the monocular input frame itself.
struct FrameRef {
  int frame = 0;
  ViewOffset view{};
};

class Provider {
 public:
  virtual ~Provider() = default;

  /// Relative depth of center frame t in [0,1]; disparity = a*z + b with
  /// the pair from affine().
  virtual DepthMap depth(int frame) const = 0;
  virtual AffineDepthParams affine() const = 0;

  /// Flow from `a` to `b` on a's grid. Supported pairs: any view to the
  /// center view of another frame, and a view to the same view of another
  /// frame. Throws otherwise.
  virtual FlowField flow(FrameRef a, FrameRef b) const = 0;

  virtual int frames() const = 0;

  DisparityMap disparity(int frame) const { return depth_to_disparity(depth(frame), affine()); }
};

/// Normalization used by every provider: z = (d - b) / a with b = min d and
/// a = max d - min d (a = 1 for a single plane).
AffineDepthParams normalization_for(double min_disparity, double max_disparity);

/// Exact depth and flow from a generated scene.
class SceneOracleProvider final : public Provider {
 public:
  explicit SceneOracleProvider(std::shared_ptr<const SceneTruth> scene);

  DepthMap depth(int frame) const override;
  AffineDepthParams affine() const override { return params_; }
  FlowField flow(FrameRef a, FrameRef b) const override;
  int frames() const override { return scene_->frames(); }

 private:
  std::shared_ptr<const SceneTruth> scene_;
  AffineDepthParams params_;
};

/// Video simulated by cropping a static light field: the flow is the known
/// uniform crop motion plus, for side views, the parallax of the per-frame
/// disparity.
class CropVideoProvider final : public Provider {
 public:
  CropVideoProvider(std::shared_ptr<const LfVideo> video, std::vector<DisparityMap> disparity);

  DepthMap depth(int frame) const override;
  AffineDepthParams affine() const override { return params_; }
  FlowField flow(FrameRef a, FrameRef b) const override;
  int frames() const override { return static_cast<int>(video_->frames.size()); }

 private:
  std::shared_ptr<const LfVideo> video_;
  std::vector<DisparityMap> disparity_;
  AffineDepthParams params_;
};

/// Reads depth_%03d.pfm from depth_dir and flow_%03d_%03d.flo (center frame
/// to center frame) from flow_dir. View flows are composed from the center
/// flow and the disparity a*z + b. Missing or malformed files throw.
class FileProvider final : public Provider {
 public:
  FileProvider(std::string depth_dir, std::string flow_dir, int frames, AffineDepthParams params);

  DepthMap depth(int frame) const override;
  AffineDepthParams affine() const override { return params_; }
  FlowField flow(FrameRef a, FrameRef b) const override;
  int frames() const override { return frames_; }

  static std::string depth_name(int frame);
  static std::string flow_name(int from, int to);

 private:
  std::string depth_dir_;
  std::string flow_dir_;
  int frames_;
  AffineDepthParams params_;
};

/// Writes the files FileProvider reads: depth for every frame and center
/// flows between consecutive frames in both directions.
void export_provider_files(const Provider& p, const std::string& depth_dir, const std::string& flow_dir);

/// Plane-sweep disparity of a light field's center view: for each candidate
/// in [lo, hi] the photo-consistency cost against all views is box filtered
/// and the per-pixel minimum wins.
DisparityMap estimate_disparity(const LightField& L, double lo = -4.0, double hi = 4.0, double step = 0.1,
                                int window = 5);

}  // namespace lfv
