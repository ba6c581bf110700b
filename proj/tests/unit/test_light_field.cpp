#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "lfv/light_field.hpp"
#include "support/oracles.hpp"

using namespace lfv;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double variance(const Image& img) {
  double mu = 0.0, var = 0.0;
  for (double v : img.tensor().values()) mu += v;
  mu /= static_cast<double>(img.tensor().size());
  for (double v : img.tensor().values()) var += (v - mu) * (v - mu);
  return var / static_cast<double>(img.tensor().size());
}

}  // namespace

TEST(AngularGrid, RejectsEvenSizes) {
  EXPECT_THROW(AngularGrid(2, 3), Error);
  EXPECT_THROW(AngularGrid(3, 4), Error);
  AngularGrid g(5, 3);
  EXPECT_EQ(g.offset(0, 0).u, -2);
  EXPECT_EQ(g.offset(4, 2).v, 1);
  EXPECT_TRUE(g.contains({2, 1}));
  EXPECT_FALSE(g.contains({0, 2}));
}

TEST(LightField, RejectsOutOfRangeValues) {
  Tensor t({1, 1, 2, 2, 3}, 0.5);
  t[3] = 1.5;
  EXPECT_THROW(LightField(AngularGrid(1, 1), t), Error);
  t[3] = NAN;
  EXPECT_THROW(LightField(AngularGrid(1, 1), t), Error);
}

TEST(TDSynthesis, IdentityLayersReproduceImage) {
  const Image I = oracle::texture(8, 10);
  TDRepresentation F(3, 1, 8, 10, 1.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c) F.at(1, 0, y, x, c) = I.at(y, x, c);
  const auto L = td_synthesize(F, DisplacementVector{{-1, 0, 1}}, AngularGrid(3, 3));
  for (int iu = 0; iu < 3; ++iu)
    for (int iv = 0; iv < 3; ++iv) EXPECT_EQ(max_abs_diff(L.view(iu, iv).tensor(), I.tensor()), 0.0);
  EXPECT_EQ(max_abs_diff(center_view(L).tensor(), I.tensor()), 0.0);
}

TEST(TDSynthesis, ZeroLayersGiveZeroField) {
  TDRepresentation F(3, 2, 6, 6, 0.0);
  const auto L = td_synthesize(F, DisplacementVector{{-0.7, 0.2, 1.3}}, AngularGrid(3, 3));
  for (double v : L.tensor().values()) EXPECT_EQ(v, 0.0);
}

TEST(TDSynthesis, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dd(-2.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    TDRepresentation F(oracle::random_tensor({3, 2, 8, 8, 3}, rng));
    DisplacementVector D{{dd(rng), dd(rng), dd(rng)}};
    const auto L = td_synthesize(F, D, AngularGrid(3, 3));
    const auto ref = oracle::td_synthesize(F.tensor(), D.values, 3, 3);
    EXPECT_LE(max_abs_diff(L.tensor(), ref), 1e-12);
  }
}

TEST(TDSynthesis, UniformSpacingIsBitIdentical) {
  std::mt19937_64 rng(23);
  TDRepresentation F(oracle::random_tensor({3, 2, 7, 9, 3}, rng));
  const auto a = td_synthesize_uniform(F, AngularGrid(5, 5));
  const auto b = td_synthesize(F, DisplacementVector{{-1, 0, 1}}, AngularGrid(5, 5));
  EXPECT_EQ(std::memcmp(a.tensor().data(), b.tensor().data(), a.tensor().size() * sizeof(double)), 0);
  EXPECT_EQ(DisplacementVector::uniform(3).values, (std::vector<double>{-1, 0, 1}));
}

TEST(TDSynthesis, RankSumIsAdditive) {
  std::mt19937_64 rng(29);
  // Small values keep the rank sum inside [0,1] so clipping is inactive.
  Tensor f = oracle::random_tensor({3, 3, 6, 6, 3}, rng, 0.0, 0.6);
  DisplacementVector D{{-1.3, 0.1, 0.9}};
  const AngularGrid g(3, 3);
  const auto full = td_synthesize(TDRepresentation(f), D, g);
  const std::size_t per_rank = 6 * 6 * 3;
  Tensor f1({3, 1, 6, 6, 3}), f2({3, 2, 6, 6, 3});
  for (int n = 0; n < 3; ++n) {
    std::copy_n(f.data() + (n * 3) * per_rank, per_rank, f1.data() + n * per_rank);
    std::copy_n(f.data() + (n * 3 + 1) * per_rank, 2 * per_rank, f2.data() + n * 2 * per_rank);
  }
  const auto a = td_synthesize(TDRepresentation(f1), D, g);
  const auto b = td_synthesize(TDRepresentation(f2), D, g);
  for (std::size_t i = 0; i < full.tensor().size(); ++i)
    EXPECT_NEAR(full.tensor()[i], a.tensor()[i] + b.tensor()[i], 1e-12);
}

TEST(TDSynthesis, CenterViewIndependentOfD) {
  std::mt19937_64 rng(31);
  TDRepresentation F(oracle::random_tensor({3, 2, 6, 6, 3}, rng));
  const auto a = td_synthesize(F, DisplacementVector{{-2.5, 0.3, 4.0}}, AngularGrid(3, 3));
  const auto b = td_synthesize(F, DisplacementVector{{0.1, 0.2, 0.3}}, AngularGrid(3, 3));
  EXPECT_EQ(max_abs_diff(center_view(a).tensor(), center_view(b).tensor()), 0.0);
}

TEST(TDSynthesis, RejectsMismatchedD) {
  TDRepresentation F(3, 1, 4, 4, 0.5);
  EXPECT_THROW(td_synthesize(F, DisplacementVector{{0, 1}}, AngularGrid(3, 3)), Error);
}

TEST(TDSynthesis, GradientWrtLayersAndDisplacements) {
  std::mt19937_64 rng(37);
  const Tensor f = oracle::random_tensor({3, 2, 6, 6, 3}, rng, 0.05, 0.7);
  const Tensor D({3}, std::vector<double>{-1.37, 0.21, 0.83});
  const AngularGrid g(3, 3);
  auto weights = ad::constant(oracle::random_tensor({3, 3, 6, 6, 3}, rng, -1, 1));
  const auto rf = oracle::check_gradient(
      f, [&](const ad::Var& F) { return ad::sum(ad::mul(td_synthesize(F, ad::constant(D), g), weights)); }, 1);
  EXPECT_LE(rf.max_rel_err, 1e-4);
  const auto rd = oracle::check_gradient(
      D, [&](const ad::Var& Dv) { return ad::sum(ad::mul(td_synthesize(ad::constant(f), Dv, g), weights)); }, 2,
      3);
  EXPECT_LE(rd.max_rel_err, 1e-4);
}

TEST(Epi, IdenticalViewsGiveConstantColumns) {
  LightField L(AngularGrid(5, 5), 6, 8);
  const Image I = oracle::texture(6, 8);
  for (int iu = 0; iu < 5; ++iu)
    for (int iv = 0; iv < 5; ++iv) L.set_view(iu, iv, I);
  const Image epi = extract_epi(L, EpiAxis::horizontal, 3);
  ASSERT_EQ(epi.height(), 5);
  for (int r = 1; r < 5; ++r)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(epi.at(r, x, 0), epi.at(0, x, 0));
}

TEST(Epi, ShiftedFieldHasUnitSlope) {
  const auto L = oracle::constant_disparity_lf(7, 32, 48, 1.0);
  const Image epi = extract_epi(L, EpiAxis::horizontal, 16);
  EXPECT_NEAR(epi_slope(epi), 1.0, 0.02);
  const Image epv = extract_epi(L, EpiAxis::vertical, 20);
  EXPECT_NEAR(epi_slope(epv), 1.0, 0.02);
}

TEST(Epi, SingleViewIsOneRowAndOutOfRangeThrows) {
  const auto L = oracle::constant_disparity_lf(1, 5, 7, 0.0);
  const Image epi = extract_epi(L, EpiAxis::horizontal, 2);
  EXPECT_EQ(epi.height(), 1);
  EXPECT_EQ(epi.width(), 7);
  EXPECT_THROW(extract_epi(L, EpiAxis::horizontal, 5), Error);
  EXPECT_THROW(extract_epi(L, EpiAxis::vertical, -1), Error);
}

TEST(Refocus, IdenticalViewsAtZeroAlpha) {
  LightField L(AngularGrid(3, 3), 6, 6);
  const Image I = oracle::texture(6, 6);
  for (int iu = 0; iu < 3; ++iu)
    for (int iv = 0; iv < 3; ++iv) L.set_view(iu, iv, I);
  EXPECT_LE(max_abs_diff(refocus(L, 0.0).tensor(), I.tensor()), 1e-12);
}

TEST(Refocus, ConstantViewsAnyAlpha) {
  LightField L(AngularGrid(5, 5), 6, 6, 0.37);
  for (double alpha : {-2.5, 0.3, 1.0, 3.7}) {
    const Image r = refocus(L, alpha);
    for (double v : r.tensor().values()) EXPECT_NEAR(v, 0.37, 1e-12);
  }
}

TEST(Refocus, SharpAtMatchingDisparityBlurredElsewhere) {
  const double delta = 1.0;
  const auto L = oracle::constant_disparity_lf(5, 40, 40, delta);
  const Image c = center_view(L);
  const Image sharp = refocus(L, delta);
  double worst = 0.0;
  for (int y = 4; y < 36; ++y)
    for (int x = 4; x < 36; ++x)
      for (int ch = 0; ch < 3; ++ch) worst = std::max(worst, std::abs(sharp.at(y, x, ch) - c.at(y, x, ch)));
  EXPECT_LE(worst, 1e-3);
  EXPECT_LT(variance(refocus(L, 0.0)), variance(c));
}
