#pragma once

// Metrics, ablation and variable-baseline drivers, and report emission.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lfv/fit.hpp"
#include "lfv/networks.hpp"
#include "lfv/provider.hpp"
#include "lfv/scene.hpp"

namespace lfv {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) with peak 1, capped at kPsnrCap. `margin` pixels along
/// every image border are left out.
double psnr(const Image& a, const Image& b, int margin = 0);
double psnr(const LightField& a, const LightField& b, int margin = 0);
/// PSNR over the view pixels where the mask equals `holes`.
double psnr_masked(const LightField& a, const LightField& b, const HoleMask& mask, bool holes, int margin = 0);
/// Mean absolute error over the view pixels where the mask equals `holes`.
double mae_masked(const LightField& a, const LightField& b, const HoleMask& mask, bool holes, int margin = 0);

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
/// evaluated at every fully contained window position, per channel, and
/// averaged. Throws if either side is smaller than the window.
double ssim(const Image& a, const Image& b);
/// Mean SSIM over views.
double ssim(const LightField& a, const LightField& b);

/// Sum over views of the per-view RMSE between pred_t(u) pulled back along
/// flow(gt_{t-1}(u) -> gt_t(u)) and gt_{t-1}(u), skipping a kBorderMargin
/// frame. `flows_prev_to_t` holds one flow per view in grid order.
double temporal_stability(const LightField& pred_t, const LightField& gt_prev,
                          const std::vector<FlowField>& flows_prev_to_t);
/// Same, with the flows taken from `provider` between frames t-1 and t.
double temporal_stability(const LightField& pred_t, const LightField& gt_prev, const Provider& provider, int t);

struct MetricRow {
  std::string experiment;
  std::string scene;
  std::string variant;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double e_temp = 0.0;
  std::uint64_t seed = 0;
  /// Not part of the CSV: mean absolute error on disoccluded pixels.
  double hole_mae = 0.0;
};

/// Optional images emitted next to the table.
struct ReportArtifact {
  std::string name;
  LightField lf;
  DisparityMap disparity;
  DisplacementVector displacements;
};

struct MetricReport {
  std::string experiment;
  std::map<std::string, std::string> config;
  std::vector<MetricRow> rows;
  std::vector<ReportArtifact> artifacts;
};

// ---- ablation -------------------------------------------------------------------

struct AblationScene {
  std::string name;
  std::shared_ptr<const SceneTruth> truth;
  /// Frame that is fitted; needs a previous frame for E_temp.
  int frame = 1;
};

struct AblationToggles {
  bool occ = false;
  bool adaptive = false;
  bool refine = false;
};

struct AblationConfig {
  FitConfig fit;
  std::vector<std::uint64_t> seeds{0};
  /// Required when toggles.refine is set.
  std::shared_ptr<const RefinementBlock> refinement;
  bool keep_artifacts = false;
};

/// Rows are cumulative: Base (fixed uniform D, no disocclusion term), then
/// each enabled toggle added on top in the order occ, adaptive, refine. The
/// row with all three is named "Proposed". One row per scene, variant and
/// seed.
MetricReport run_ablation(const std::vector<AblationScene>& scenes, const AblationToggles& toggles,
                          const AblationConfig& cfg);

/// Mean of a column over the rows with the given variant.
double mean_of(const std::vector<MetricRow>& rows, const std::string& variant, double MetricRow::*field);

// ---- variable baseline ------------------------------------------------------------

struct BaselinePoint {
  double scale = 1.0;
  double slope = 0.0;
  double ratio = 1.0;
};

/// For each scale s, fits the center frame with disparity s*d and measures
/// the EPI slope of the synthesized light field; ratio = slope(s)/slope(1).
/// The first scale is the reference. Throws on a textureless frame.
std::vector<BaselinePoint> variable_baseline_experiment(const SceneTruth& scene, const std::vector<double>& scales,
                                                        const FitConfig& fit, int frame = 0);

/// Mean EPI slope over horizontal EPIs at rows H/4, H/2 and 3H/4.
double lf_epi_slope(const LightField& L);

// ---- reports --------------------------------------------------------------------

inline constexpr const char* kMetricsHeader = "experiment,scene,variant,psnr_db,ssim,e_temp,seed";

/// Writes metrics.csv (header only when there are no rows) and, per
/// artifact, epi_<name>.png, refocus_<name>_<k>.png and hist_<name>.png.
void emit_report(const std::vector<MetricReport>& reports, const std::string& out_dir);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

/// Nearest-neighbour upscaled horizontal EPI through the center row.
Image epi_strip(const LightField& L, int row, int angular_scale = 8);
/// Histogram of disparity values with the displacement planes marked.
Image displacement_histogram(const DisparityMap& d, const DisplacementVector& D, int width = 256, int height = 128);

}  // namespace lfv
