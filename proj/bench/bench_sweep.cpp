// Serial reference against the OpenMP trial pool on a short alignment sweep.
#include <benchmark/benchmark.h>

#include "hybridtrap/experiments.hpp"

using namespace hybridtrap;

namespace {

SweepSpec spec() {
    SweepSpec s;
    s.parameter = SweepParameter::offset_x;
    s.values = {0.0, 400.0};
    s.trials = 2;
    return s;
}

void BM_SweepSerial(benchmark::State& state) {
    const auto s = spec();
    for (auto _ : state) benchmark::DoNotOptimize(run_sweep_serial(s));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(s.values.size()) * s.trials);
}

void BM_SweepParallel(benchmark::State& state) {
    const auto s = spec();
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_sweep_parallel(s, threads));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(s.values.size()) * s.trials);
}

void BM_SingleTrial(benchmark::State& state) {
    const auto s = spec();
    for (auto _ : state) benchmark::DoNotOptimize(run_trial(s, 0, 0));
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Unit(benchmark::kSecond)->Iterations(1)->UseRealTime();
BENCHMARK(BM_SweepParallel)->DenseRange(1, 4)->Unit(benchmark::kSecond)->Iterations(1)->UseRealTime();
BENCHMARK(BM_SingleTrial)->Unit(benchmark::kMillisecond)->Iterations(2)->UseRealTime();

BENCHMARK_MAIN();
