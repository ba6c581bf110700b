// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lfv/eval.hpp"
#include "lfv/fit.hpp"
#include "lfv/io.hpp"
#include "lfv/losses.hpp"
#include "lfv/train.hpp"
#include "lfv/warp.hpp"
#include "support/oracles.hpp"

using namespace lfv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<const SceneTruth> make_scene(const std::vector<double>& disparities, int frames, int size, int U,
                                             std::uint64_t seed,
                                             const std::vector<std::pair<double, double>>& velocities = {}) {
  return std::make_shared<const SceneTruth>(
      generate_scene(layered_scene(disparities, frames, size, size, AngularGrid(U, U), seed, velocities)));
}

// ---------------------------------------------------------------------------------

Outcome td_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> rank(1, 4), size(4, 16), ang(0, 2);
  std::uniform_real_distribution<double> dd(-2.5, 2.5);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int R = rank(rng), H = size(rng), W = size(rng), U = 1 + 2 * ang(rng);
    const TDRepresentation F(oracle::random_tensor({3, R, H, W, 3}, rng));
    const DisplacementVector D{{dd(rng), dd(rng), dd(rng)}};
    const auto L = td_synthesize(F, D, AngularGrid(U, U));
    worst = std::max(worst, max_abs_diff(L.tensor(), oracle::td_synthesize(F.tensor(), D.values, U, U)));
  }
  const double sec = seconds_since(t0);
  return {worst <= 1e-6 && sec < 10.0, fmt("max_abs_err=%.3g (<=1e-6) runtime=%.2fs (<10s)", worst, sec)};
}

Outcome fixed_spacing_identity() {
  std::mt19937_64 rng(202);
  int identical = 0;
  for (int k = 0; k < 10; ++k) {
    const TDRepresentation F(oracle::random_tensor({3, 1 + k % 4, 9, 11, 3}, rng));
    const auto a = td_synthesize(F, DisplacementVector{{-1.0, 0.0, 1.0}}, AngularGrid(5, 5));
    const auto b = oracle::td_synthesize_integer(F.tensor(), 5, 5);
    const auto c = td_synthesize_uniform(F, AngularGrid(5, 5));
    const std::size_t bytes = a.tensor().size() * sizeof(double);
    if (std::memcmp(a.tensor().data(), b.data(), bytes) == 0 &&
        std::memcmp(a.tensor().data(), c.tensor().data(), bytes) == 0)
      ++identical;
  }
  return {identical == 10, fmt("bit-identical %d/10", identical)};
}

Outcome warping_identities() {
  std::mt19937_64 rng(303);
  const Image I(oracle::random_tensor({13, 17, 3}, rng));
  const Image out = inverse_warp(I, FlowField(13, 17));
  const bool exact = out.tensor().storage() == I.tensor().storage();

  const int U = 5, H = 32, W = 32, margin = 4;
  const double delta = 0.7;
  const auto L = oracle::constant_disparity_lf(U, H, W, delta);
  const DisparityMap d(H, W, delta);
  const Image c = center_view(L);
  double worst = 0.0;
  for (const auto o : L.grid().offsets()) {
    const Image w = warp_sai_to_center(L, o, d);
    double s = 0.0;
    long n = 0;
    for (int y = margin; y < H - margin; ++y)
      for (int x = margin; x < W - margin; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          s += std::abs(w.at(y, x, ch) - c.at(y, x, ch));
          ++n;
        }
    worst = std::max(worst, s / static_cast<double>(n));
  }
  return {exact && worst <= 2e-2,
          fmt("zero-flow identity %s, worst interior MAE to center=%.3g (<=2e-2)", exact ? "exact" : "NOT exact", worst)};
}

Outcome gradient_suite() {
  std::mt19937_64 rng(404);
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

  const Tensor Fl = oracle::random_tensor({3, 2, 6, 6, 3}, rng, 0.05, 0.7);
  const Tensor D0({3}, std::vector<double>{-1.37, 0.21, 0.83});
  const AngularGrid g(3, 3);
  const auto wl = ad::constant(oracle::random_tensor({3, 3, 6, 6, 3}, rng, -1, 1));
  const Tensor img = oracle::random_tensor({7, 9, 3}, rng);
  const Tensor disp = oracle::random_tensor({7, 9, 2}, rng, -2.3, 2.3);
  const auto wi = ad::constant(oracle::random_tensor({7, 9, 3}, rng, -1, 1));

  struct Probe {
    const char* name;
    Tensor x;
    std::function<ad::Var(const ad::Var&)> fn;
  };
  const std::vector<Probe> probes = {
      {"td/F", Fl, [&](const ad::Var& F) { return ad::sum(ad::mul(td_synthesize(F, ad::constant(D0), g), wl)); }},
      {"td/D", D0, [&](const ad::Var& D) { return ad::sum(ad::mul(td_synthesize(ad::constant(Fl), D, g), wl)); }},
      {"warp/img", img, [&](const ad::Var& v) { return ad::sum(ad::mul(inverse_warp(v, ad::constant(disp)), wi)); }},
      {"warp/disp", disp, [&](const ad::Var& v) { return ad::sum(ad::mul(inverse_warp(ad::constant(img), v), wi)); }},
      {"photo", L0, [&](const ad::Var& L) { return photometric_loss(L, I); }},
      {"geo", L0, [&](const ad::Var& L) { return geometric_loss(L, I, d); }},
      {"temp", L0, [&](const ad::Var& L) { return temporal_loss(L, In, d, f); }},
      {"occ", L0, [&](const ad::Var& L) { return disocclusion_loss(L, Cp, Cn, M); }},
      {"bins", D0, [&](const ad::Var& D) { return bin_density_loss(D, d); }},
      {"tv", L0, [&](const ad::Var& L) { return tv_loss(L); }},
  };
  double worst = 0.0;
  int probed = 0;
  std::string per;
  std::uint64_t seed = 1;
  for (const auto& p : probes) {
    const auto r = oracle::check_gradient(p.x, p.fn, seed++, 10);
    worst = std::max(worst, r.max_rel_err);
    probed += r.probes;
    per += fmt(" %s=%.1e", p.name, r.max_rel_err);
  }
  return {worst <= 1e-4 && probed == 10 * static_cast<int>(probes.size()),
          fmt("max_rel_err=%.3g (<=1e-4) over %d probes;", worst, probed) + per};
}

Outcome direct_fit_convergence() {
  const auto S = make_scene({1.0}, 3, 64, 5, 1);
  const SceneOracleProvider provider(S);
  FitConfig cfg;
  cfg.iterations = 2000;
  cfg.weights = LossWeights::zeros();
  cfg.weights.photo = cfg.weights.geo = 1.0;
  const auto in = make_fit_inputs(provider, S->center, 1, S->grid(), cfg.weights);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = direct_fit(in, cfg);
  const double sec = seconds_since(t0);
  const double p = psnr_masked(r.synthesize(in.grid), S->lf[1], S->holes[1], false);
  return {p >= 35.0 && sec <= 300.0,
          fmt("PSNR(non-disoccluded)=%.2f dB (>=35) after %d iterations, runtime=%.1fs (<=300s)", p, cfg.iterations,
              sec)};
}

Outcome disocclusion_ablation() {
  std::string per;
  double mean = 0.0, worst = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto S = make_scene({-1.0, 1.0}, 3, 32, 3, seed, {{0.0, 0.0}, {3.0, 3.0}});
    const SceneOracleProvider provider(S);
    double mae[2];
    for (int occ = 0; occ < 2; ++occ) {
      FitConfig cfg;
      cfg.iterations = 800;
      cfg.seed = seed;
      cfg.fixed_displacements = DisplacementVector::uniform(3);
      cfg.weights.occ = occ ? 0.2 : 0.0;
      const auto in = make_fit_inputs(provider, S->center, 1, S->grid(), cfg.weights);
      mae[occ] = mae_masked(direct_fit(in, cfg).synthesize(in.grid), S->lf[1], S->holes[1], true);
    }
    const double red = 1.0 - mae[1] / mae[0];
    mean += red / 5.0;
    worst = std::min(worst, red);
    per += fmt(" %.1f%%", 100.0 * red);
  }
  return {worst >= 0.10,
          fmt("disoccluded MAE reduction per seed:%s; min=%.1f%% mean=%.1f%% (>=10%% on every seed)", per.c_str(),
              100.0 * worst, 100.0 * mean)};
}

Outcome adaptive_displacements() {
  std::string per;
  double worst = 1e9;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto S = make_scene({-2.3, 0.4, 1.7}, 3, 40, 3, seed, {{0.0, 0.0}, {2.0, 2.0}, {-3.0, 3.0}});
    const SceneOracleProvider provider(S);
    double p[2];
    for (int learn = 0; learn < 2; ++learn) {
      FitConfig cfg;
      cfg.iterations = 600;
      cfg.seed = seed;
      if (!learn) cfg.fixed_displacements = DisplacementVector::uniform(3);
      const auto in = make_fit_inputs(provider, S->center, 1, S->grid(), cfg.weights);
      p[learn] = psnr(direct_fit(in, cfg).synthesize(in.grid), S->lf[1]);
    }
    worst = std::min(worst, p[1] - p[0]);
    per += fmt(" %+.2f", p[1] - p[0]);
  }
  return {worst >= 0.3, fmt("PSNR gain of learned D over (-1,0,1) per seed [dB]:%s; min=%.2f (>=0.3)", per.c_str(),
                            worst)};
}

Outcome refinement_contract() {
  RefinementConfig rc;
  rc.patch_size = 8;
  rc.angular_res = 3;
  rc.embed = 16;
  const RefinementBlock probe(rc);
  std::mt19937_64 rng(808);
  const LightField L(AngularGrid(3, 3), oracle::random_tensor({3, 3, 16, 16, 3}, rng));
  const bool passthrough = probe.refine(L, center_view(L), 1.0).refined.tensor().storage() == L.tensor().storage();

  TrainConfig c;
  c.angular_res = 3;
  c.crop_height = c.crop_width = 16;
  c.sequence_length = 2;
  c.synthesis.base_width = 4;
  c.synthesis.stages = 2;
  c.synthesis.rank = 2;
  c.synthesis.max_width = 8;
  c.displacement.width = 8;
  c.refinement.patch_size = 8;
  c.refinement.embed = 16;
  c.a_values = {1.0};
  c.b_min = c.b_max = 0.0;
  c.epochs = 1;
  auto planes = [](std::uint64_t seed, int frames) {
    return generate_scene(layered_scene({-0.5, 0.3, 1.0}, frames, 16, 16, AngularGrid(3, 3), seed,
                                        {{0.0, 0.0}, {1.0, 0.0}, {-1.0, 1.0}}));
  };
  const auto backbone = train_selfsup({sequence_from_scene(planes(1, 2))}, c).checkpoint;

  std::vector<RefinementSample> data;
  for (std::uint64_t s = 1; s <= 5; ++s) data.push_back(refinement_sample(planes(s, 1).lf[0]));
  TrainConfig r = c;
  r.phase = TrainPhase::refine;
  r.a_values = {1.2};
  r.b_min = r.b_max = 0.3;
  r.lr = 3e-3;
  r.epochs = 30;
  r.validation_fraction = 0.0;
  r.patience = 1000;
  const auto res = train_refinement(data, backbone, r);

  Backbone before(r), after(r);
  load_backbone(backbone, r, before);
  load_backbone(res.checkpoint, r, after);
  bool frozen = true;
  const auto pb = before.parameters(), pa = after.parameters();
  for (std::size_t i = 0; i < pb.size(); ++i)
    frozen = frozen && pb[i].first == pa[i].first && pb[i].second.value().storage() == pa[i].second.value().storage();

  RefinementConfig trained = r.refinement;
  trained.angular_res = r.angular_res;
  RefinementBlock block(trained);
  load_refinement(res.checkpoint, r, block);
  double unrefined = 0.0, refined = 0.0;
  for (const auto& s : data) {
    const Image I = center_view(s.lf);
    const LightField base = backbone_single(before, I, depth_to_disparity(s.depth, {1.2, 0.3}), r.grid());
    unrefined += refinement_loss(base, s.lf) / data.size();
    refined += refinement_loss(block.refine(base, I).refined, s.lf) / data.size();
  }
  return {passthrough && frozen && refined < unrefined,
          fmt("mask=1 passthrough %s, backbone %s, held-in L1 %.5f -> %.5f on %zu LFs", passthrough ? "exact" : "BROKEN",
              frozen ? "bit-frozen" : "CHANGED", unrefined, refined, data.size())};
}

Outcome variable_baseline() {
  const auto S = make_scene({1.0}, 1, 32, 5, 9);
  FitConfig fit;
  fit.iterations = 300;
  fit.weights = LossWeights::zeros();
  fit.weights.photo = fit.weights.geo = 1.0;
  const auto pts = variable_baseline_experiment(*S, {1.0, 1.5, 2.0, 2.5}, fit);
  double worst = 0.0;
  std::string per;
  for (const auto& p : pts) {
    worst = std::max(worst, std::abs(p.ratio - p.scale) / p.scale);
    per += fmt(" s=%.1f:%.3f", p.scale, p.ratio);
  }
  return {worst <= 0.05, fmt("EPI slope ratios%s; worst relative error=%.2f%% (<=5%%)", per.c_str(), 100.0 * worst)};
}

Outcome temporal_stability_check() {
  const auto still = make_scene({0.6}, 2, 32, 3, 1);
  const SceneOracleProvider still_p(still);
  const double e_static = temporal_stability(still->lf[1], still->lf[0], still_p, 1);

  const int frames = 4;
  double e_perfect = 0.0;
  std::string per;
  bool never_worse = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto S = make_scene({0.6}, frames, 32, 3, seed, {{1.0, 1.0}});
    const SceneOracleProvider provider(S);
    for (int t = 1; t < frames; ++t) e_perfect = std::max(e_perfect, temporal_stability(S->lf[t], S->lf[t - 1], provider, t));
    double e[2] = {0.0, 0.0};
    for (int temp = 0; temp < 2; ++temp)
      for (int t = 1; t <= 2; ++t) {
        FitConfig cfg;
        cfg.iterations = 400;
        cfg.seed = seed;
        cfg.weights.temp = temp ? 0.5 : 0.0;
        const auto in = make_fit_inputs(provider, S->center, t, S->grid(), cfg.weights);
        e[temp] += temporal_stability(direct_fit(in, cfg).synthesize(in.grid), S->lf[t - 1], provider, t) / 2.0;
      }
    never_worse = never_worse && e[1] <= e[0];
    per += fmt(" %.4f/%.4f", e[1], e[0]);
  }
  return {e_static == 0.0 && e_perfect <= 3e-2 && never_worse,
          fmt("static perfect=%.3g (==0), translating perfect=%.3g (<=3e-2), fitted with/without temporal term:%s",
              e_static, e_perfect, per.c_str())};
}

Outcome file_formats() {
  const fs::path dir = fs::temp_directory_path() / "lfv_acceptance_io";
  fs::create_directories(dir);
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<float> fv(-50.0f, 50.0f);

  Tensor pfm({7, 5, 3});
  for (auto& v : pfm.values()) v = fv(rng);
  write_pfm((dir / "a.pfm").string(), pfm);
  const bool pfm_ok = read_pfm((dir / "a.pfm").string()).storage() == pfm.storage();
  Tensor pfm1({6, 9});
  for (auto& v : pfm1.values()) v = fv(rng);
  write_pfm((dir / "b.pfm").string(), pfm1);
  const Tensor back1 = read_pfm((dir / "b.pfm").string());
  const bool pfm1_ok = back1.size() == pfm1.size() && std::equal(pfm1.values().begin(), pfm1.values().end(),
                                                                 back1.values().begin());

  FlowField flo(6, 8);
  for (auto& v : flo.tensor().values()) v = fv(rng);
  write_flo((dir / "a.flo").string(), flo);
  const bool flo_ok = read_flo((dir / "a.flo").string()).tensor().storage() == flo.tensor().storage();

  const LightField L(AngularGrid(5, 5), oracle::random_tensor({5, 5, 9, 7, 3}, rng));
  save_lf_grid(L, (dir / "lf.png").string());
  const double png_err = max_abs_diff(load_lf_grid((dir / "lf.png").string(), 5, 5).tensor(), L.tensor());
  fs::remove_all(dir);
  return {pfm_ok && pfm1_ok && flo_ok && png_err <= 1.0 / 255.0,
          fmt("PFM %s, .flo %s, LF grid PNG max err=%.5f (<=%.5f)", pfm_ok && pfm1_ok ? "bit-exact" : "MISMATCH",
              flo_ok ? "bit-exact" : "MISMATCH", png_err, 1.0 / 255.0)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"td-oracle-equivalence", td_oracle_equivalence},
      {"fixed-spacing-identity", fixed_spacing_identity},
      {"warping-identities", warping_identities},
      {"gradient-suite", gradient_suite},
      {"direct-fit-convergence", direct_fit_convergence},
      {"disocclusion-ablation", disocclusion_ablation},
      {"adaptive-displacements", adaptive_displacements},
      {"refinement-contract", refinement_contract},
      {"variable-baseline", variable_baseline},
      {"temporal-stability", temporal_stability_check},
      {"file-formats", file_formats},
  };
  int failed = 0, k = 0;
  for (const auto& c : criteria) {
    ++k;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s [%02d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", k, c.name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", k - failed, k);
  return failed == 0 ? 0 : 1;
}
