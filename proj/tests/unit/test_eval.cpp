#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "lfv/eval.hpp"

using namespace lfv;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w, 3);
  for (auto& v : img.tensor().values()) v = u(rng);
  return img;
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("lfv_eval_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Psnr, IdenticalIsCapped) {
  const Image a = random_image(8, 8, 1);
  EXPECT_DOUBLE_EQ(psnr(a, a), kPsnrCap);
}

TEST(Psnr, KnownMse) {
  Image a(6, 6, 3, 0.3), b(6, 6, 3, 0.4);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, MatchesDirectSumAndIsSymmetric) {
  const Image a = random_image(10, 12, 2), b = random_image(10, 12, 3);
  double s = 0.0;
  for (std::size_t i = 0; i < a.tensor().size(); ++i) s += std::pow(a.tensor()[i] - b.tensor()[i], 2);
  const double expect = -10.0 * std::log10(s / static_cast<double>(a.tensor().size()));
  EXPECT_NEAR(psnr(a, b), expect, 1e-10);
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, MarginIgnoresBorder) {
  Image a(10, 10, 3, 0.5), b(10, 10, 3, 0.5);
  b.at(0, 0, 0) = 1.0;
  EXPECT_LT(psnr(a, b), kPsnrCap);
  EXPECT_DOUBLE_EQ(psnr(a, b, 2), kPsnrCap);
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), Error);
}

TEST(Ssim, IdenticalIsOne) {
  const Image a = random_image(16, 16, 4);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double c = 0.4, d = 0.5, C1 = 1e-4;
  const double expect = (2 * c * d + C1) / (c * c + d * d + C1);
  EXPECT_NEAR(ssim(Image(12, 14, 3, c), Image(12, 14, 3, d)), expect, 1e-9);
}

TEST(Ssim, InvertedIsNegative) {
  const Image a = random_image(16, 16, 5);
  Image b = a;
  for (auto& v : b.tensor().values()) v = 1.0 - v;
  EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Ssim, TooSmallThrows) {
  EXPECT_THROW(ssim(Image(10, 16), Image(10, 16)), Error);
}

TEST(Ssim, LightFieldIsMeanOverViews) {
  LightField a(AngularGrid(1, 3), 12, 12, 0.5), b = a;
  b.set_view(0, 1, Image(12, 12, 3, 0.6));
  const double expect = (2.0 + ssim(Image(12, 12, 3, 0.5), Image(12, 12, 3, 0.6))) / 3.0;
  EXPECT_NEAR(ssim(a, b), expect, 1e-12);
}

TEST(TemporalStability, StaticIsZero) {
  const AngularGrid g(3, 3);
  LightField L(g, 12, 12);
  for (auto& v : L.tensor().values()) v = 0.25;
  const std::vector<FlowField> flows(9, FlowField(12, 12));
  EXPECT_DOUBLE_EQ(temporal_stability(L, L, flows), 0.0);
}

TEST(TemporalStability, ConstantOffsetSumsOverViews) {
  const AngularGrid g(3, 3);
  const LightField a(g, 12, 12, 0.3), b(g, 12, 12, 0.4);
  const std::vector<FlowField> flows(9, FlowField(12, 12));
  EXPECT_NEAR(temporal_stability(a, b, flows), 0.1 * 9, 1e-12);
}

TEST(TemporalStability, TranslatingSceneGroundTruthIsStable) {
  auto S = std::make_shared<const SceneTruth>(
      generate_scene(layered_scene({0.6}, 4, 32, 32, AngularGrid(3, 3), 2, {{1.0, 1.0}})));
  const SceneOracleProvider p(S);
  for (int t = 1; t < 4; ++t) EXPECT_LE(temporal_stability(S->lf[t], S->lf[t - 1], p, t), 3e-2);
}

TEST(TemporalStability, WrongFlowCountThrows) {
  const LightField a(AngularGrid(3, 3), 12, 12);
  EXPECT_THROW(temporal_stability(a, a, std::vector<FlowField>(2, FlowField(12, 12))), Error);
}

TEST(Masked, MaeSelectsHolesOnly) {
  const AngularGrid g(1, 1);
  LightField a(g, 4, 4, 0.0), b(g, 4, 4, 0.0);
  HoleMask m(g, 4, 4);
  m.at(0, 0, 1, 1) = 1;
  b.at(0, 0, 1, 1, 0) = 0.6;
  b.at(0, 0, 2, 2, 0) = 0.9;
  EXPECT_NEAR(mae_masked(a, b, m, true), 0.2, 1e-12);
  EXPECT_NEAR(mae_masked(a, b, m, false), 0.9 / 45.0, 1e-12);
}

TEST(Ablation, EmptyTogglesGiveBaseRow) {
  auto S = std::make_shared<const SceneTruth>(generate_scene(layered_scene({0.5}, 2, 16, 16, AngularGrid(3, 3), 3)));
  AblationConfig cfg;
  cfg.fit.iterations = 3;
  const auto rep = run_ablation({{"flat", S, 1}}, {}, cfg);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].variant, "Base");
  EXPECT_EQ(rep.rows[0].scene, "flat");
  EXPECT_GT(rep.rows[0].psnr_db, 0.0);
}

TEST(Ablation, RowsAreCumulativeAndDeterministic) {
  auto S = std::make_shared<const SceneTruth>(
      generate_scene(layered_scene({-0.5, 0.8}, 3, 16, 16, AngularGrid(3, 3), 4, {{0.0, 0.0}, {1.0, 1.0}})));
  AblationConfig cfg;
  cfg.fit.iterations = 4;
  cfg.seeds = {1, 2};
  const AblationToggles tog{true, true, false};
  const auto r1 = run_ablation({{"two", S, 1}}, tog, cfg);
  const auto r2 = run_ablation({{"two", S, 1}}, tog, cfg);
  ASSERT_EQ(r1.rows.size(), 6u);
  EXPECT_EQ(r1.rows[0].variant, "Base");
  EXPECT_EQ(r1.rows[1].variant, "Base+occ");
  EXPECT_EQ(r1.rows[2].variant, "Base+occ+adpt");
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    EXPECT_EQ(r1.rows[i].psnr_db, r2.rows[i].psnr_db);
    EXPECT_EQ(r1.rows[i].e_temp, r2.rows[i].e_temp);
  }
}

TEST(Ablation, RefineWithoutBlockThrows) {
  auto S = std::make_shared<const SceneTruth>(generate_scene(layered_scene({0.5}, 2, 16, 16, AngularGrid(3, 3), 3)));
  EXPECT_THROW(run_ablation({{"flat", S, 1}}, {false, false, true}, AblationConfig{}), Error);
}

TEST(Ablation, MeanOfUnknownVariantThrows) {
  EXPECT_THROW(mean_of({}, "Base", &MetricRow::psnr_db), Error);
  std::vector<MetricRow> rows(2);
  rows[0].variant = rows[1].variant = "x";
  rows[0].ssim = 0.2;
  rows[1].ssim = 0.4;
  EXPECT_NEAR(mean_of(rows, "x", &MetricRow::ssim), 0.3, 1e-12);
}

TEST(Baseline, RatioTracksScale) {
  const auto S = generate_scene(layered_scene({1.0}, 1, 32, 32, AngularGrid(5, 5), 6));
  FitConfig fit;
  fit.iterations = 1;
  fit.n_layers = 3;
  const auto pts = variable_baseline_experiment(S, {1.0, 2.0}, fit);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_DOUBLE_EQ(pts[0].ratio, 1.0);
  EXPECT_NEAR(pts[1].ratio, 2.0, 0.2);
}

TEST(Baseline, TexturelessThrows) {
  SyntheticSceneSpec spec = layered_scene({0.0}, 1, 16, 16, AngularGrid(3, 3), 1);
  auto S = generate_scene(spec);
  for (auto& v : S.center[0].tensor().values()) v = 0.5;
  EXPECT_THROW(variable_baseline_experiment(S, {1.0}, FitConfig{}), Error);
}

TEST(Report, EmptyWritesHeaderOnly) {
  const auto dir = temp_dir("empty");
  emit_report({}, dir.string());
  EXPECT_TRUE(read_metrics_csv((dir / "metrics.csv").string()).empty());
  std::ifstream is(dir / "metrics.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, kMetricsHeader);
}

TEST(Report, RoundTripsRowsAndWritesArtifacts) {
  const auto dir = temp_dir("rows");
  MetricReport rep;
  MetricRow r{"ablation", "two", "Proposed", 31.234567891, 0.912345678, 0.0123456789, 7};
  rep.rows = {r};
  LightField L(AngularGrid(3, 3), 16, 16, 0.5);
  DisparityMap d(16, 16, 0.7);
  DisplacementVector D;
  D.values = {-1.0, 0.0, 1.0};
  rep.artifacts.push_back({"a", L, d, D});
  emit_report({rep}, dir.string());
  const auto rows = read_metrics_csv((dir / "metrics.csv").string());
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].variant, "Proposed");
  EXPECT_EQ(rows[0].seed, 7u);
  EXPECT_NEAR(rows[0].psnr_db, r.psnr_db, 1e-5 * r.psnr_db);
  EXPECT_NEAR(rows[0].ssim, r.ssim, 1e-5 * r.ssim);
  EXPECT_NEAR(rows[0].e_temp, r.e_temp, 1e-5 * r.e_temp);
  EXPECT_TRUE(fs::exists(dir / "epi_a.png"));
  EXPECT_TRUE(fs::exists(dir / "hist_a.png"));
  EXPECT_TRUE(fs::exists(dir / "refocus_a_00.png"));
}

TEST(Report, CommaInFieldThrows) {
  MetricReport rep;
  rep.rows.push_back({"a,b", "s", "v"});
  EXPECT_THROW(emit_report({rep}, temp_dir("comma").string()), Error);
}

TEST(Report, UnwritableDirectoryThrows) {
  EXPECT_THROW(emit_report({}, "/proc/lfv_cannot_write_here"), Error);
}
