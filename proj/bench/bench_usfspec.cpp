// Serial vs OpenMP: suite batches and joint-fit restarts, plus the exact path.

#include <benchmark/benchmark.h>

#include "usfspec/batch.hpp"
#include "usfspec/harness.hpp"
#include "usfspec/robust_recovery.hpp"

using namespace usfspec;

namespace {

const std::string kConfigDir = std::string(USFSPEC_SOURCE_DIR) + "/configs";

std::vector<ExperimentSpec> demo_batch(int reps) {
  auto specs = load_specs(kConfigDir + "/demo.json");
  for (auto& s : specs) s.repetitions = reps;
  return specs;
}

void BM_SuiteSerial(benchmark::State& state) {
  const auto specs = demo_batch(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_suite(specs, Execution::serial));
}

void BM_SuiteParallel(benchmark::State& state) {
  const auto specs = demo_batch(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_suite(specs, Execution::parallel));
}

// Noisy 29 Hz capture that does not converge quickly, so every restart runs.
void restarts(benchmark::State& state, bool parallel) {
  auto spec = load_specs(kConfigDir + "/table1.json").back();
  spec.capture.noise_sd = 0.08;
  spec.capture.seed = 3;
  const SimulatedCapture cap = capture(spec.build_model(), spec.capture);
  RobustConfig cfg = spec.resolved_robust();
  cfg.restarts = static_cast<int>(state.range(0));
  cfg.outer_max = 2;
  cfg.parallel_restarts = parallel;
  for (auto _ : state) benchmark::DoNotOptimize(recover_robust(cap.data, spec.resolved_order(), cfg));
}

void BM_RestartsSerial(benchmark::State& state) { restarts(state, false); }
void BM_RestartsParallel(benchmark::State& state) { restarts(state, true); }

void BM_ExactTableRow(benchmark::State& state) {
  const auto spec = load_specs(kConfigDir + "/table1.json").back().noiseless();
  const SimulatedCapture cap = capture(spec.build_model(), spec.capture);
  for (auto _ : state) benchmark::DoNotOptimize(recover_exact(cap.data, spec.resolved_order()));
}

}  // namespace

BENCHMARK(BM_SuiteSerial)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SuiteParallel)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RestartsSerial)->Arg(4)->Arg(15)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RestartsParallel)->Arg(4)->Arg(15)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ExactTableRow)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
