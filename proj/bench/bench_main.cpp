#include <benchmark/benchmark.h>
#include <omp.h>

#include "brpsync/crb.hpp"
#include "brpsync/experiments.hpp"

using namespace brpsync;

namespace {

experiments::ExperimentConfig sweep_config(int threads) {
  experiments::ExperimentConfig c;
  c.snr_grid_db = {10.0, 20.0};
  c.trials = 32;
  c.mle_grid_points = 256;
  c.gamma_samples = 100;
  c.threads = threads;
  return c;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto c = sweep_config(1);
  for (auto _ : state) benchmark::DoNotOptimize(experiments::run_sweep_serial(c));
}

void BM_SweepParallel(benchmark::State& state) {
  const auto c = sweep_config(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(experiments::run_sweep(c));
}

void BM_GammaSerial(benchmark::State& state) {
  const channel::SystemConfig s;
  for (auto _ : state) benchmark::DoNotOptimize(crb::estimate_gamma_serial(s, 512, 1));
}

void BM_GammaParallel(benchmark::State& state) {
  const channel::SystemConfig s;
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(crb::estimate_gamma(s, 512, 1));
}

void BM_EmcbSerial(benchmark::State& state) {
  const channel::SystemConfig s;
  const auto pre = experiments::make_preambles(s, experiments::PreambleMode::optimized_brp);
  for (auto _ : state) benchmark::DoNotOptimize(crb::emcb_serial(s, pre.brp1, pre.brp2, 64, 1));
}

void BM_EmcbParallel(benchmark::State& state) {
  const channel::SystemConfig s;
  const auto pre = experiments::make_preambles(s, experiments::PreambleMode::optimized_brp);
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(crb::emcb(s, pre.brp1, pre.brp2, 64, 1));
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GammaSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GammaParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmcbSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmcbParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
