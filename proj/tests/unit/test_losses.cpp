#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lfv/losses.hpp"
#include "support/oracles.hpp"

using namespace lfv;

namespace {

LightField replicate(const Image& I, int U) {
  LightField L(AngularGrid(U, U), I.height(), I.width());
  for (int iu = 0; iu < U; ++iu)
    for (int iv = 0; iv < U; ++iv) L.set_view(iu, iv, I);
  return L;
}

LightField random_lf(int U, int H, int W, std::mt19937_64& rng) {
  return LightField(AngularGrid(U, U), oracle::random_tensor({U, U, H, W, 3}, rng));
}

// Elementwise mean |a-b| over the margin-excluded interior.
double interior_mae(const Image& a, const Image& b) {
  double s = 0.0;
  long n = 0;
  for (int y = 2; y < a.height() - 2; ++y)
    for (int x = 2; x < a.width() - 2; ++x)
      for (int c = 0; c < 3; ++c) {
        s += std::abs(a.at(y, x, c) - b.at(y, x, c));
        ++n;
      }
  return s / static_cast<double>(n);
}

}  // namespace

TEST(LossWeights, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.photo, 1.0);
  EXPECT_EQ(w.geo, 1.0);
  EXPECT_EQ(w.temp, 0.5);
  EXPECT_EQ(w.occ, 0.2);
  EXPECT_EQ(w.bins, 2.0);
  EXPECT_EQ(w.tv, 0.1);
  w.occ = -0.1;
  EXPECT_THROW(w.validate(), Error);
}

TEST(TotalLoss, WeightedSum) {
  LossTerms ones{1, 1, 1, 1, 1, 1};
  EXPECT_NEAR(total_self_loss(ones, LossWeights{}).total, 4.8, 1e-12);
  EXPECT_EQ(total_self_loss(LossTerms{}, LossWeights{}).total, 0.0);
  EXPECT_EQ(total_self_loss(LossTerms{0.3, 2, 5, 1, 7, 9}, LossWeights::zeros()).total, 0.0);
  LossTerms t{0.3, 0.2, 0.7, 0.05, 0.11, 0.9};
  LossWeights w{0.5, 1.5, 0.25, 2, 1, 3};
  LossWeights w2{1, 3, 0.5, 4, 2, 6};
  const auto r = total_self_loss(t, w);
  EXPECT_NEAR(r.total, 0.5 * 0.3 + 1.5 * 0.2 + 0.25 * 0.7 + 2 * 0.05 + 0.11 + 3 * 0.9, 1e-12);
  EXPECT_NEAR(total_self_loss(t, w2).total, 2 * r.total, 1e-12);
  LossWeights bad;
  bad.tv = -1;
  EXPECT_THROW(total_self_loss(t, bad), Error);
}

TEST(LossReport, RecordRoundTrip) {
  LossReport r = total_self_loss(LossTerms{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, LossWeights{}, 42);
  const auto s = r.to_record();
  EXPECT_EQ(s.rfind("step=42 photo=", 0), 0u);
  const auto back = LossReport::parse_record(s);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.total, r.total);
  EXPECT_EQ(back.bins, r.bins);
  EXPECT_THROW(LossReport::parse_record("step=1 photo=x"), Error);
}

TEST(Photometric, Examples) {
  const Image I = oracle::texture(12, 12);
  EXPECT_EQ(photometric_loss(replicate(I, 3), I), 0.0);
  Image lower(12, 12, 3);
  for (std::size_t i = 0; i < I.tensor().size(); ++i) lower.tensor()[i] = I.tensor()[i] - 0.1;
  EXPECT_NEAR(photometric_loss(replicate(I, 3), lower), 0.1, 1e-12);
  std::mt19937_64 rng(5);
  const auto L = random_lf(3, 12, 12, rng);
  const Image J(oracle::random_tensor({12, 12, 3}, rng));
  EXPECT_NEAR(photometric_loss(L, J), interior_mae(center_view(L), J), 1e-12);
  EXPECT_THROW(photometric_loss(L, Image(11, 12)), Error);
}

TEST(Geometric, Examples) {
  std::mt19937_64 rng(6);
  const auto L1 = random_lf(1, 10, 10, rng);
  const Image J(oracle::random_tensor({10, 10, 3}, rng));
  EXPECT_DOUBLE_EQ(geometric_loss(L1, J, DisparityMap(10, 10, 0.7)), photometric_loss(L1, J));

  const Image I = oracle::texture(12, 12);
  EXPECT_EQ(geometric_loss(replicate(I, 3), I, DisparityMap(12, 12, 0.0)), 0.0);

  const auto L = oracle::constant_disparity_lf(5, 40, 40, 1.0);
  EXPECT_LE(geometric_loss(L, center_view(L), DisparityMap(40, 40, 1.0)), 2e-2);
}

TEST(Temporal, ZeroFlowReducesToGeometric) {
  const Image I = oracle::texture(12, 12);
  EXPECT_EQ(temporal_loss(replicate(I, 3), I, DisparityMap(12, 12), FlowField(12, 12)), 0.0);
  std::mt19937_64 rng(7);
  const auto L = random_lf(3, 12, 12, rng);
  const Image J(oracle::random_tensor({12, 12, 3}, rng));
  const DisparityMap d(oracle::random_tensor({12, 12}, rng, -1, 1));
  EXPECT_DOUBLE_EQ(temporal_loss(L, J, d, FlowField(12, 12)), geometric_loss(L, J, d));
}

TEST(Disocclusion, Examples) {
  std::mt19937_64 rng(8);
  const auto L = random_lf(3, 10, 10, rng);
  const auto Cp = random_lf(3, 10, 10, rng);
  const auto Cn = random_lf(3, 10, 10, rng);
  HoleMask empty(AngularGrid(3, 3), 10, 10);
  EXPECT_EQ(disocclusion_loss(L, Cp, Cn, empty), 0.0);

  HoleMask M(AngularGrid(3, 3), 10, 10);
  for (std::size_t i = 0; i < M.bits.size(); i += 3) M.bits[i] = 1;
  EXPECT_EQ(disocclusion_loss(L, L, Cn, M), 0.0);

  // Mid-gray field with candidates offset by 0.2 and 0.1 (alternating sign).
  LightField G(AngularGrid(3, 3), 10, 10, 0.5), P(AngularGrid(3, 3), 10, 10), Q(AngularGrid(3, 3), 10, 10);
  for (std::size_t i = 0; i < G.tensor().size(); ++i) {
    P.tensor()[i] = i % 2 ? 0.7 : 0.3;
    Q.tensor()[i] = i % 3 ? 0.6 : 0.4;
  }
  EXPECT_NEAR(disocclusion_loss(G, P, Q, M), 0.1, 1e-12);
  // Equal candidates reduce to a masked mean |L - c|.
  double s = 0.0;
  long n = 0;
  for (int iu = 0; iu < 3; ++iu)
    for (int iv = 0; iv < 3; ++iv)
      for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x) {
          if (!M.at(iu, iv, y, x)) continue;
          for (int c = 0; c < 3; ++c) s += std::abs(L.at(iu, iv, y, x, c) - Cp.at(iu, iv, y, x, c));
          n += 3;
        }
  EXPECT_NEAR(disocclusion_loss(L, Cp, Cp, M), s / n, 1e-12);
}

TEST(BinDensity, Examples) {
  EXPECT_EQ(bin_density_loss(DisplacementVector{{0.7}}, DisparityMap(8, 8, 0.7)), 0.0);
  DisparityMap two(8, 8, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) two.at(y, x) = 1.0;
  EXPECT_NEAR(bin_density_loss(DisplacementVector{{0.0}}, two), 0.5, 1e-12);
  EXPECT_NEAR(bin_density_loss(DisplacementVector{{0.0, 1.0}}, two), 0.0, 1e-12);
  EXPECT_THROW(bin_density_loss(DisplacementVector{}, two), Error);
}

TEST(BinDensity, SubsamplesLargeMapsDeterministically) {
  std::mt19937_64 rng(9);
  const DisparityMap d(oracle::random_tensor({150, 120}, rng, -2, 2));
  const DisplacementVector D{{-1.0, 0.2, 1.1}};
  const double a = bin_density_loss(D, d);
  EXPECT_EQ(a, bin_density_loss(D, d));
  EXPECT_GT(a, 0.0);
}

TEST(TV, Examples) {
  EXPECT_EQ(tv_loss(LightField(AngularGrid(3, 3), 6, 6, 0.4)), 0.0);
  LightField ramp(AngularGrid(3, 3), 5, 9);
  const double g = 0.05;
  for (int iu = 0; iu < 3; ++iu)
    for (int iv = 0; iv < 3; ++iv)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 9; ++x)
          for (int c = 0; c < 3; ++c) ramp.at(iu, iv, y, x, c) = g * x;
  EXPECT_NEAR(tv_loss(ramp), g, 1e-12);

  std::mt19937_64 rng(10);
  const auto L = random_lf(3, 6, 7, rng);
  double sh = 0.0, sv = 0.0;
  for (int iu = 0; iu < 3; ++iu)
    for (int iv = 0; iv < 3; ++iv)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 7; ++x)
          for (int c = 0; c < 3; ++c) {
            if (x < 6) sh += std::abs(L.at(iu, iv, y, x + 1, c) - L.at(iu, iv, y, x, c));
            if (y < 5) sv += std::abs(L.at(iu, iv, y + 1, x, c) - L.at(iu, iv, y, x, c));
          }
  EXPECT_NEAR(tv_loss(L), sh / (9 * 6 * 6 * 3) + sv / (9 * 5 * 7 * 3), 1e-12);
}

TEST(Refinement, Examples) {
  std::mt19937_64 rng(11);
  const auto A = random_lf(3, 6, 6, rng);
  EXPECT_EQ(refinement_loss(A, A), 0.0);
  LightField B(AngularGrid(3, 3), 6, 6, 0.3), C(AngularGrid(3, 3), 6, 6, 0.35);
  EXPECT_NEAR(refinement_loss(B, C), 0.05, 1e-12);
  const auto D = random_lf(3, 6, 6, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < A.tensor().size(); ++i) s += std::abs(A.tensor()[i] - D.tensor()[i]);
  EXPECT_NEAR(refinement_loss(A, D), s / A.tensor().size(), 1e-12);
}

TEST(LossGradients, AllSixTerms) {
  std::mt19937_64 rng(12);
  const int U = 3, H = 10, W = 10;
  const Tensor L0 = oracle::random_tensor({U, U, H, W, 3}, rng);
  const Image I(oracle::random_tensor({H, W, 3}, rng));
  const Image In(oracle::random_tensor({H, W, 3}, rng));
  const DisparityMap d(oracle::random_tensor({H, W}, rng, -1.3, 1.3));
  const FlowField f(oracle::random_tensor({H, W, 2}, rng, -1.7, 1.7));
  const LightField Cp(AngularGrid(U, U), oracle::random_tensor({U, U, H, W, 3}, rng));
  const LightField Cn(AngularGrid(U, U), oracle::random_tensor({U, U, H, W, 3}, rng));
  HoleMask M(AngularGrid(U, U), H, W);
  for (auto& b : M.bits) b = rng() % 2;

  auto check = [&](const std::function<ad::Var(const ad::Var&)>& fn, std::uint64_t seed) {
    const auto r = oracle::check_gradient(L0, fn, seed);
    EXPECT_EQ(r.probes, 10);
    EXPECT_LE(r.max_rel_err, 1e-4);
  };
  check([&](const ad::Var& L) { return photometric_loss(L, I); }, 1);
  check([&](const ad::Var& L) { return geometric_loss(L, I, d); }, 2);
  check([&](const ad::Var& L) { return temporal_loss(L, In, d, f); }, 3);
  check([&](const ad::Var& L) { return disocclusion_loss(L, Cp, Cn, M); }, 4);
  check([&](const ad::Var& L) { return tv_loss(L); }, 5);
  check([&](const ad::Var& L) { return refinement_loss(L, Cp); }, 6);

  const Tensor D0({3}, std::vector<double>{-0.83, 0.11, 0.97});
  const auto rb = oracle::check_gradient(D0, [&](const ad::Var& D) { return bin_density_loss(D, d); }, 7, 3);
  EXPECT_LE(rb.max_rel_err, 1e-4);
}
