#include "lfv/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lfv/optim.hpp"

namespace lfv {

void FitConfig::validate() const {
  require(iterations >= 1, "fit: iterations must be >= 1");
  require(step > 0.0 && d_step > 0.0, "fit: step sizes must be positive");
  require(n_layers >= 1 && rank >= 1, "fit: n_layers and rank must be >= 1");
  require(!fixed_displacements || fixed_displacements->size() == n_layers,
          "fit: fixed displacements must have one value per layer");
  require(d_margin >= 0.0, "fit: d_margin must be nonnegative");
  weights.validate();
}

FitInputs make_fit_inputs(const Provider& provider, const std::vector<Image>& video, int t, AngularGrid grid,
                          const LossWeights& weights) {
  const int T = static_cast<int>(video.size());
  require(t >= 0 && t < T, "make_fit_inputs: frame out of range");
  require(T >= 2 || (weights.temp == 0.0 && weights.occ == 0.0),
          "make_fit_inputs: temporal and disocclusion terms need at least two frames");
  const int tp = t > 0 ? t - 1 : t + 1;
  const int tn = t + 1 < T ? t + 1 : t - 1;
  FitInputs in;
  in.grid = grid;
  in.cur = video[static_cast<std::size_t>(t)];
  in.prev = video[static_cast<std::size_t>(std::clamp(tp, 0, T - 1))];
  in.next = video[static_cast<std::size_t>(std::clamp(tn, 0, T - 1))];
  in.disparity = provider.disparity(t);
  require(in.disparity.height() == in.cur.height() && in.disparity.width() == in.cur.width(),
          "make_fit_inputs: depth and frame sizes differ");
  if (weights.temp > 0.0) in.flow_next_to_cur = provider.flow({tn, {}}, {t, {}});
  if (weights.occ > 0.0) {
    const int H = in.cur.height(), W = in.cur.width();
    in.holes = disocclusion_mask(in.cur, in.disparity, grid);
    LightField cp(grid, H, W), cn(grid, H, W);
    for (int iu = 0; iu < grid.U; ++iu)
      for (int iv = 0; iv < grid.V; ++iv) {
        const ViewOffset o = grid.offset(iu, iv);
        cp.set_view(iu, iv, flow_warp_candidate(in.prev, provider.flow({t, o}, {tp, {}})));
        cn.set_view(iu, iv, flow_warp_candidate(in.next, provider.flow({t, o}, {tn, {}})));
      }
    in.cand_prev = std::move(cp);
    in.cand_next = std::move(cn);
  }
  return in;
}

namespace {

void check_inputs(const FitInputs& in, const LossWeights& w) {
  const int H = in.cur.height(), W = in.cur.width();
  require(H >= 2 && W >= 2 && in.cur.channels() == 3, "fit: current frame must be an RGB image");
  require(in.disparity.height() == H && in.disparity.width() == W, "fit: disparity size differs from the frame");
  if (w.temp > 0.0)
    require(in.flow_next_to_cur.has_value() && in.next.same_size(in.cur),
            "fit: the temporal term needs the next frame and its flow");
  if (w.occ > 0.0)
    require(in.cand_prev && in.cand_next && in.holes, "fit: the disocclusion term needs candidates and a hole mask");
}

ad::Var objective(const ad::Var& F, const ad::Var& D, const FitInputs& in, const LossWeights& w) {
  const ad::Var L = td_synthesize(F, D, in.grid);
  ad::Var total = ad::constant(Tensor({1}, 0.0));
  auto add = [&](double weight, const ad::Var& term) {
    if (weight > 0.0) total = ad::add(total, ad::scale(term, weight));
  };
  if (w.photo > 0.0) add(w.photo, photometric_loss(L, in.cur));
  if (w.geo > 0.0) add(w.geo, geometric_loss(L, in.cur, in.disparity));
  if (w.temp > 0.0) add(w.temp, temporal_loss(L, in.next, in.disparity, *in.flow_next_to_cur));
  if (w.occ > 0.0) add(w.occ, disocclusion_loss(L, *in.cand_prev, *in.cand_next, *in.holes));
  if (w.bins > 0.0) add(w.bins, bin_density_loss(D, in.disparity));
  if (w.tv > 0.0) add(w.tv, tv_loss(L));
  return total;
}

}  // namespace

LossTerms evaluate_terms(const LightField& L, const DisplacementVector& D, const FitInputs& in,
                         const LossWeights& w) {
  check_inputs(in, w);
  LossTerms t;
  t.photo = photometric_loss(L, in.cur);
  t.geo = geometric_loss(L, in.cur, in.disparity);
  if (in.flow_next_to_cur && in.next.same_size(in.cur))
    t.temp = temporal_loss(L, in.next, in.disparity, *in.flow_next_to_cur);
  if (in.cand_prev && in.cand_next && in.holes) t.occ = disocclusion_loss(L, *in.cand_prev, *in.cand_next, *in.holes);
  t.bins = bin_density_loss(D, in.disparity);
  t.tv = tv_loss(L);
  return t;
}

std::pair<TDRepresentation, DisplacementVector> initial_fit_state(const FitInputs& in, const FitConfig& cfg) {
  cfg.validate();
  const int N = cfg.n_layers, R = cfg.rank, H = in.cur.height(), W = in.cur.width();
  DisplacementVector D;
  if (cfg.fixed_displacements) {
    D = *cfg.fixed_displacements;
  } else {
    const double lo = in.disparity.min() - cfg.d_margin, hi = in.disparity.max() + cfg.d_margin;
    for (int i = 0; i < N; ++i) D.values.push_back(lo + (i + 0.5) * (hi - lo) / N);
  }
  TDRepresentation F(N, R, H, W);
  // Small seeded jitter breaks the symmetry between rank terms.
  std::mt19937_64 rng(cfg.seed * 6364136223846793005ull + 1442695040888963407ull);
  std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);
  for (int n = 0; n < N; ++n)
    for (int r = 0; r < R; ++r)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c) {
            const double base = cfg.init == FitInit::uniform
                                    ? 0.5
                                    : std::pow(std::max(in.cur.at(y, x, c), 1e-3) / R, 1.0 / N);
            F.at(n, r, y, x, c) = std::clamp(base + jitter(rng), 0.0, 1.0);
          }
  return {std::move(F), std::move(D)};
}

FitResult direct_fit(const FitInputs& in, const FitConfig& cfg) {
  cfg.validate();
  const LossWeights& w = cfg.weights;
  check_inputs(in, w);
  auto [F0, D0] = initial_fit_state(in, cfg);

  FitResult res;
  const bool any = w.photo > 0 || w.geo > 0 || w.temp > 0 || w.occ > 0 || w.bins > 0 || w.tv > 0;
  if (any) {
    const bool learn_d = !cfg.fixed_displacements;
    ad::Var F = ad::parameter(F0.tensor());
    ad::Var D = learn_d ? ad::parameter(Tensor({cfg.n_layers}, D0.values)) : ad::constant(Tensor({cfg.n_layers}, D0.values));
    AdamWConfig fc;
    fc.lr = cfg.step;
    fc.weight_decay = 0.0;
    AdamW opt_f({F}, fc);
    AdamWConfig dc = fc;
    dc.lr = cfg.d_step;
    AdamW opt_d;
    if (learn_d) opt_d = AdamW({D}, dc);

    double best = std::numeric_limits<double>::infinity();
    Tensor best_f = F.value(), best_d = D.value();
    res.trace.reserve(static_cast<std::size_t>(cfg.iterations));
    for (int it = 0; it < cfg.iterations; ++it) {
      opt_f.zero_grad();
      if (learn_d) opt_d.zero_grad();
      ad::Var total = objective(F, D, in, w);
      const double value = total.value()[0];
      if (!std::isfinite(value))
        throw DivergenceError("fit diverged at iteration " + std::to_string(it) + ": loss is " + std::to_string(value));
      res.trace.push_back(value);
      if (value < best) {
        best = value;
        best_f = F.value();
        best_d = D.value();
        res.best_iteration = it;
      }
      ad::backward(total);
      opt_f.step();
      if (learn_d) opt_d.step();
      for (auto& v : F.mutable_value().values()) v = std::clamp(v, 0.0, 1.0);
    }
    // The iterate after the last step has not been scored yet.
    const double last = objective(F, D, in, w).value()[0];
    if (std::isfinite(last) && last < best) {
      best_f = F.value();
      best_d = D.value();
      res.best_iteration = cfg.iterations;
    }
    F0 = TDRepresentation(std::move(best_f));
    D0.values.assign(best_d.values().begin(), best_d.values().end());
  }

  // Sort D ascending and carry the layers along.
  const int N = cfg.n_layers;
  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return D0[a] < D0[b]; });
  const std::size_t layer = F0.tensor().size() / static_cast<std::size_t>(N);
  res.F = TDRepresentation(F0.layers(), F0.rank(), F0.height(), F0.width());
  for (int i = 0; i < N; ++i) {
    res.D.values.push_back(D0[order[static_cast<std::size_t>(i)]]);
    std::copy_n(F0.tensor().data() + layer * static_cast<std::size_t>(order[static_cast<std::size_t>(i)]), layer,
                res.F.tensor().data() + layer * static_cast<std::size_t>(i));
  }
  res.report = total_self_loss(evaluate_terms(res.synthesize(in.grid), res.D, in, w), w, res.best_iteration);
  return res;
}

}  // namespace lfv
