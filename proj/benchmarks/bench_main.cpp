#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "abcsmooth/abc.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/smc.hpp"
#include "abcsmooth/smoothing.hpp"

using namespace abcsmooth;

namespace {

const NonlinearGrowthModel& benchmark_model() {
  static const NonlinearGrowthModel model(1, 10.0, 1.0);
  return model;
}

const Trajectory& benchmark_data() {
  static const Trajectory data = simulate(benchmark_model(), 5, 7);
  return data;
}

void BM_SmcStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream stream(1);
  const auto cloud = smc_init(benchmark_model(), benchmark_data().observations[0], n, stream);
  for (auto _ : state) {
    auto next = smc_step(cloud, benchmark_model(), benchmark_data().observations[1],
                         ResamplePolicy::ess_below(0.5), stream);
    benchmark::DoNotOptimize(next.log_weights.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SmcStep)->RangeMultiplier(4)->Range(256, 16384);

void BM_AbcSmcStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream stream(2);
  const auto kernel = AbcKernel::indicator(2.0);
  const auto cloud = abc_smc_init(benchmark_model(), benchmark_data().observations[0], n, kernel, stream);
  for (auto _ : state) {
    auto next = abc_smc_step(cloud, benchmark_model(), benchmark_data().observations[1], kernel,
                             ResamplePolicy::ess_below(0.5), stream);
    benchmark::DoNotOptimize(next.log_weights.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AbcSmcStep)->RangeMultiplier(4)->Range(256, 16384);

void BM_MultinomialResample(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream stream(3);
  std::vector<double> w(n);
  for (auto& x : w) x = std::log(stream.uniform());
  for (auto _ : state) {
    auto idx = multinomial_resample(w, stream);
    benchmark::DoNotOptimize(idx.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MultinomialResample)->RangeMultiplier(4)->Range(256, 65536);

void BM_FosUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream stream(4);
  const auto functional = AdditiveFunctional::mean_state(1);
  const auto& y = benchmark_data().observations;
  const auto c0 = smc_init(benchmark_model(), y[0], n, stream);
  const auto c1 = smc_step(c0, benchmark_model(), y[1], ResamplePolicy::ess_below(0.5), stream);
  const auto stats = fos_init(functional, c0);
  for (auto _ : state) {
    auto next = fos_update(stats, c0, c1, benchmark_model(), functional);
    benchmark::DoNotOptimize(next.values.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FosUpdate)->RangeMultiplier(2)->Range(128, 2048)->Complexity(benchmark::oNSquared);

}  // namespace

BENCHMARK_MAIN();
