// Serial reference vs OpenMP batch on the symmetric benchmark.

#include "rl/ladder.hpp"
#include "rl/sim.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

namespace {

struct Setup {
  rl::ScenarioConfig config;
  rl::ResetPolicy policy;
  std::vector<rl::SilenceWindow> windows;

  Setup() {
    config.params = rl::symmetric_benchmark();
    config.sim.horizon = 5.0;
    config.sim.dt = 1e-3;
    const rl::LadderSolution sol = rl::solve_ladder(config.params);
    policy = rl::policy_from(sol);
    windows = rl::bind_windows({{rl::WindowSpace::PrivateState, rl::WindowAnchor::Beta1, 0.0, 0.05},
                                {rl::WindowSpace::PrivateState, rl::WindowAnchor::Beta2, 0.0, 0.05}},
                               policy);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_BatchSerial(benchmark::State& state) {
  const Setup& s = setup();
  for (auto _ : state)
    benchmark::DoNotOptimize(rl::run_batch_serial(s.config, s.policy, s.windows, int(state.range(0))));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BatchOpenMP(benchmark::State& state) {
  const Setup& s = setup();
  const int workers = int(state.range(1));
  for (auto _ : state)
    benchmark::DoNotOptimize(rl::run_batch(s.config, s.policy, s.windows, int(state.range(0)), {workers, 0}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["workers"] = workers;
}

void worker_args(benchmark::internal::Benchmark* b) {
  const int max_workers = omp_get_num_procs();
  for (int n : {256, 1024})
    for (int w = 1; w <= max_workers; w *= 2) b->Args({n, w});
}

} // namespace

BENCHMARK(BM_BatchSerial)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchOpenMP)->Apply(worker_args)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
