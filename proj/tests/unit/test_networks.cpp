#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "lfv/losses.hpp"
#include "lfv/networks.hpp"
#include "lfv/optim.hpp"
#include "support/oracles.hpp"

using namespace lfv;

namespace {

struct Frames {
  Image prev, cur, next;
  DisparityMap d;
};

Frames toy_frames(int H, int W, double phase = 0.0) {
  return {oracle::texture(H, W, phase - 0.3), oracle::texture(H, W, phase), oracle::texture(H, W, phase + 0.3),
          DisparityMap(H, W, 0.8)};
}

SynthesisConfig tiny_synth() {
  SynthesisConfig c;
  c.base_width = 4;
  c.stages = 2;
  c.rank = 2;
  c.max_width = 8;
  return c;
}

}  // namespace

TEST(SynthesisNet, OutputShapeAtDefaults) {
  SynthesisNet net;
  EXPECT_EQ(net.config().output_channels(), 108);
  const auto f = toy_frames(64, 96);
  auto [F, s] = net.synth_forward(f.prev, f.cur, f.next, f.d, {});
  EXPECT_EQ(F.tensor().shape(), (Shape{3, 12, 64, 96, 3}));
  for (double v : F.tensor().values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_FALSE(s.empty());
}

TEST(SynthesisNet, PadsOddSizesAndIsDeterministic) {
  SynthesisNet net(tiny_synth());
  const auto f = toy_frames(13, 18);
  auto [a, sa] = net.synth_forward(f.prev, f.cur, f.next, f.d, {});
  auto [b, sb] = net.synth_forward(f.prev, f.cur, f.next, f.d, {});
  EXPECT_EQ(a.tensor().shape(), (Shape{3, 2, 13, 18, 3}));
  EXPECT_EQ(a.tensor().storage(), b.tensor().storage());
}

TEST(SynthesisNet, GradientReachesEveryInputChannel) {
  SynthesisNet net(tiny_synth());
  const auto f = toy_frames(16, 16);
  auto x = ad::parameter(stack_inputs(f.prev, f.cur, f.next, f.d).value());
  auto [F, s] = net.forward(x, {});
  std::mt19937_64 rng(3);
  auto w = ad::constant(oracle::random_tensor(F.shape(), rng, -1, 1));
  ad::backward(ad::sum(ad::mul(F, w)));
  std::vector<double> norm(10, 0.0);
  for (std::size_t i = 0; i < x.grad().size(); ++i) norm[i % 10] += x.grad()[i] * x.grad()[i];
  for (int c = 0; c < 10; ++c) EXPECT_GT(norm[c], 0.0) << "channel " << c;
}

TEST(SynthesisNet, RecurrentStateMatters) {
  SynthesisNet net(tiny_synth());
  const auto f1 = toy_frames(16, 16, 0.0);
  const auto f2 = toy_frames(16, 16, 0.6);
  AdamW opt(nn::values_of(net.parameters()), {1e-2, 0.9, 0.999, 1e-8, 0.0});
  const AngularGrid g(3, 3);
  const ad::Var D = ad::constant(Tensor({3}, std::vector<double>{-1, 0, 1}));
  for (int it = 0; it < 5; ++it) {
    opt.zero_grad();
    nn::RecurrentState s;
    auto [F1, s1] = net.forward(stack_inputs(f1.prev, f1.cur, f1.next, f1.d), s);
    auto [F2, s2] = net.forward(stack_inputs(f2.prev, f2.cur, f2.next, f2.d), s1);
    const ad::Var terms[2] = {geometric_loss(td_synthesize(F1, D, g), f1.cur, f1.d),
                              geometric_loss(td_synthesize(F2, D, g), f2.cur, f2.d)};
    const double ws[2] = {1.0, 1.0};
    ad::backward(ad::weighted_sum(terms, ws));
    opt.step();
  }
  auto [F1, s1] = net.synth_forward(f1.prev, f1.cur, f1.next, f1.d, {});
  auto [with_state, unused1] = net.synth_forward(f2.prev, f2.cur, f2.next, f2.d, s1);
  auto [reset, unused2] = net.synth_forward(f2.prev, f2.cur, f2.next, f2.d, {});
  double diff = 0.0;
  for (std::size_t i = 0; i < reset.tensor().size(); ++i)
    diff = std::max(diff, std::abs(reset.tensor()[i] - with_state.tensor()[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(Displacement, CumulativeMidpoints) {
  const auto D = widths_to_displacements(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 0.0, 3.0);
  ASSERT_EQ(D.size(), 3);
  EXPECT_NEAR(D[0], 0.5, 1e-12);
  EXPECT_NEAR(D[1], 1.5, 1e-12);
  EXPECT_NEAR(D[2], 2.5, 1e-12);
  EXPECT_THROW(widths_to_displacements(std::vector<double>{0.5, 0.0, 0.5}, 0.0, 1.0), Error);
}

TEST(Displacement, HeadOutputSortedWithinRange) {
  DisplacementHead head;
  auto f = toy_frames(24, 20);
  const DisplacementVector D = head.displacement_forward(f.prev, f.cur, f.next, f.d);
  ASSERT_EQ(D.size(), 3);
  EXPECT_TRUE(D.is_sorted());
  for (double v : D.values) {
    EXPECT_GE(v, 0.8 - 0.5);
    EXPECT_LE(v, 0.8 + 0.5);
  }
  DisparityMap ramp(24, 20);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 20; ++x) ramp.at(y, x) = -1.0 + 0.1 * x;
  const DisplacementVector E = head.displacement_forward(f.prev, f.cur, f.next, ramp);
  EXPECT_GE(E[0], -1.5);
  EXPECT_LE(E[2], 0.9 + 0.5);
}

TEST(Displacement, GradientThroughHead) {
  DisplacementHead head;
  auto f = toy_frames(16, 16);
  const auto in = stack_inputs(f.prev, f.cur, f.next, f.d);
  auto D = head.forward(in, f.d);
  ad::backward(ad::sum(ad::mul(D, ad::constant(Tensor({3}, std::vector<double>{1.0, -2.0, 0.5})))));
  double norm = 0.0;
  for (const auto& [name, p] : head.parameters())
    if (!p.grad().empty())
      for (double g : p.grad().values()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(Refinement, TokenCounts) {
  RefinementConfig c;
  EXPECT_EQ(count_tokens(c, 192, 192).sites, 36);
  EXPECT_EQ(count_tokens(c, 192, 192).per_site, 50);
  EXPECT_EQ(count_tokens(c, 32, 32).sites, 1);
  EXPECT_EQ(count_tokens(c, 64, 96).sites, 6);
  c.angular_res = 5;
  EXPECT_EQ(count_tokens(c, 40, 40).per_site, 26);
  EXPECT_EQ(count_tokens(c, 40, 40).sites, 4);
}

TEST(Refinement, BlendArithmetic) {
  auto L = ad::constant(Tensor({1, 1, 1, 1, 3}, 0.2));
  auto R = ad::constant(Tensor({1, 1, 1, 1, 3}, 0.6));
  auto M = ad::constant(Tensor({1, 1, 1, 1, 1}, 0.5));
  const auto out = blend(L, R, M);
  for (double v : out.value().values()) EXPECT_NEAR(v, 0.4, 1e-15);
}

TEST(Refinement, MaskOverridesAndShapes) {
  RefinementConfig c;
  c.patch_size = 8;
  c.angular_res = 3;
  c.embed = 16;
  RefinementBlock block(c);
  std::mt19937_64 rng(4);
  const LightField L(AngularGrid(3, 3), oracle::random_tensor({3, 3, 12, 20, 3}, rng));
  const Image I = center_view(L);
  const auto pass = block.refine(L, I, 1.0);
  EXPECT_EQ(pass.refined.tensor().storage(), L.tensor().storage());
  const auto zero = block.refine(L, I, 0.0);
  EXPECT_EQ(zero.refined.tensor().storage(), zero.residual.tensor().storage());
  const auto free = block.refine(L, I);
  EXPECT_EQ(free.mask.shape(), (Shape{3, 3, 12, 20}));
  for (double m : free.mask.values()) {
    EXPECT_GT(m, 0.0);
    EXPECT_LT(m, 1.0);
  }
  // Blend identity for the predicted mask.
  for (int iu = 0; iu < 3; ++iu)
    for (int y = 0; y < 12; y += 5)
      for (int x = 0; x < 20; x += 7) {
        const double m = free.mask[((static_cast<std::size_t>(iu) * 3 + 1) * 12 + y) * 20 + x];
        EXPECT_NEAR(free.refined.at(iu, 1, y, x, 0),
                    m * L.at(iu, 1, y, x, 0) + (1 - m) * free.residual.at(iu, 1, y, x, 0), 1e-12);
      }
  EXPECT_THROW(block.refine(LightField(AngularGrid(5, 5), 8, 8), Image(8, 8)), Error);
}

TEST(Refinement, DecoderTreatsViewsIndependently) {
  RefinementConfig c;
  c.patch_size = 4;
  c.angular_res = 3;
  c.embed = 8;
  RefinementBlock block(c);
  std::mt19937_64 rng(5);
  const Tensor tok = oracle::random_tensor({4, 2, 3, 8}, rng, -1, 1);
  const auto a = block.decode_tokens(ad::constant(tok));
  // Reverse the batch order and decode again.
  Tensor rev(tok.shape());
  const std::size_t n = tok.size() / 4;
  for (int b = 0; b < 4; ++b) std::copy_n(tok.data() + b * n, n, rev.data() + (3 - b) * n);
  const auto r = block.decode_tokens(ad::constant(rev));
  const std::size_t m = a.value().size() / 4;
  for (int b = 0; b < 4; ++b)
    for (std::size_t i = 0; i < m; ++i) EXPECT_EQ(a.value()[b * m + i], r.value()[(3 - b) * m + i]);
}

TEST(Optim, AdamWZeroLrLeavesWeights) {
  SynthesisNet net(tiny_synth());
  const auto params = net.parameters();
  std::vector<Tensor> before;
  for (const auto& [n, p] : params) before.push_back(p.value());
  AdamW opt(nn::values_of(params), {0.0, 0.9, 0.999, 1e-8, 1e-3});
  const auto f = toy_frames(8, 8);
  auto [F, s] = net.forward(stack_inputs(f.prev, f.cur, f.next, f.d), {});
  ad::backward(ad::mean(F));
  opt.step();
  for (std::size_t k = 0; k < params.size(); ++k) EXPECT_EQ(params[k].second.value().storage(), before[k].storage());
}

TEST(Optim, AdamWMinimizesQuadratic) {
  auto x = ad::parameter(Tensor({2}, std::vector<double>{3.0, -2.0}));
  AdamW opt({x}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    ad::backward(ad::sum(ad::mul(x, x)));
    opt.step();
  }
  EXPECT_LT(std::abs(x.value()[0]), 1e-2);
  EXPECT_LT(std::abs(x.value()[1]), 1e-2);
}

TEST(Optim, PlateauHalvesAfterPatience) {
  PlateauScheduler s(4, 0.5, 1e-3);
  EXPECT_EQ(s.observe(1.0), 1.0);
  EXPECT_EQ(s.observe(0.5), 1.0);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(s.observe(0.4999), 1.0);  // below tolerance
  EXPECT_EQ(s.observe(0.5), 0.5);
  EXPECT_EQ(s.observe(0.2), 1.0);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  SynthesisNet net(tiny_synth());
  Checkpoint ck;
  ck.config["rank"] = "2";
  ck.step = 17;
  store_params(ck, net.parameters());
  const auto path = (std::filesystem::temp_directory_path() / "lfv_ckpt_test.bin").string();
  save_checkpoint(path, ck);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.step, 17);
  EXPECT_EQ(back.config.at("rank"), "2");
  SynthesisConfig other = tiny_synth();
  other.seed = 99;
  SynthesisNet net2(other);
  restore_params(back, net2.parameters());
  const auto p1 = net.parameters(), p2 = net2.parameters();
  for (std::size_t k = 0; k < p1.size(); ++k) EXPECT_EQ(p1[k].second.value().storage(), p2[k].second.value().storage());
  SynthesisConfig wider = tiny_synth();
  wider.rank = 3;
  SynthesisNet net3(wider);
  EXPECT_THROW(restore_params(back, net3.parameters()), Error);
  std::filesystem::remove(path);
}
