#include <benchmark/benchmark.h>

#include <memory>

#include "lfv/fit.hpp"
#include "lfv/networks.hpp"
#include "lfv/provider.hpp"
#include "lfv/scene.hpp"
#include "lfv/warp.hpp"

using namespace lfv;

namespace {

std::shared_ptr<const SceneTruth> scene(int size, int ang) {
  return std::make_shared<const SceneTruth>(generate_scene(layered_scene(
      {-1.0, 0.5, 1.5}, 3, size, size, AngularGrid(ang, ang), 1, {{0.0, 0.0}, {1.0, 1.0}, {-2.0, 1.0}})));
}

void BM_TdSynthesize(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const TDRepresentation F(3, 4, size, size, 0.7);
  const auto D = DisplacementVector::uniform(3);
  const AngularGrid grid(5, 5);
  for (auto _ : state) benchmark::DoNotOptimize(td_synthesize(F, D, grid));
  state.SetItemsProcessed(state.iterations() * grid.view_count());
}
BENCHMARK(BM_TdSynthesize)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_InverseWarp(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto S = scene(size, 3);
  const auto flow = S->center_flow(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(inverse_warp(S->center[0], flow));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_InverseWarp)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_FitIteration(benchmark::State& state) {
  const auto S = scene(64, 5);
  const SceneOracleProvider provider(S);
  const auto in = make_fit_inputs(provider, S->center, 1, S->grid(), LossWeights{});
  FitConfig cfg;
  cfg.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(direct_fit(in, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.iterations);
}
BENCHMARK(BM_FitIteration)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_SynthesisForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto S = scene(size, 3);
  const SynthesisNet net;
  for (auto _ : state)
    benchmark::DoNotOptimize(net.synth_forward(S->center[0], S->center[1], S->center[2], S->disparity[1], {}));
}
BENCHMARK(BM_SynthesisForward)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
