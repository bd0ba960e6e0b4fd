// Serial reference vs OpenMP path for each parallel kernel. Arg 0 = serial,
// 1 = parallel.

#include <benchmark/benchmark.h>

#include "labelaudit/corruptor.hpp"
#include "labelaudit/detector_sim.hpp"
#include "labelaudit/scoring.hpp"
#include "labelaudit/synth.hpp"
#include "labelaudit/theory.hpp"

using namespace labelaudit;

namespace {

Execution mode(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::kSerial : Execution::kParallel;
}

struct Fixture {
  Dataset clean;
  Dataset noisy;
  DetectionMap detections;
  SimulatorConfig sim;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    SynthConfig sc;
    sc.num_images = 400;
    sc.seed = 1;
    out.clean = make_synthetic_dataset(sc);
    CorruptionConfig cc;
    cc.seed = 2;
    out.noisy = apply(out.clean, plan(out.clean, cc));
    out.sim.seed = 3;
    const DetectorSimulator sim(out.clean, out.sim);
    out.detections = sim.simulate();
    record_label_queries(sim, out.noisy, out.detections);
    return out;
  }();
  return f;
}

void BM_Plan(benchmark::State& state) {
  const auto& f = fixture();
  CorruptionConfig cc;
  cc.seed = 2;
  for (auto _ : state) benchmark::DoNotOptimize(plan(f.clean, cc, mode(state)));
}

void BM_Simulate(benchmark::State& state) {
  const auto& f = fixture();
  const DetectorSimulator sim(f.clean, f.sim);
  for (auto _ : state) benchmark::DoNotOptimize(sim.simulate(mode(state)));
}

void BM_LossMethod(benchmark::State& state) {
  const auto& f = fixture();
  const RecordedSecondStage source(f.detections);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_loss_method(f.noisy, f.detections, source, PipelineConfig{}, mode(state)));
  }
}

void BM_ScoreMethod(benchmark::State& state) {
  const auto& f = fixture();
  const RecordedSecondStage source(f.detections);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_score_method(f.noisy, f.detections, source, PipelineConfig{}, mode(state)));
  }
}

void BM_Pd(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(run_pd(f.noisy, f.detections, PipelineConfig{}, mode(state)));
}

void BM_Separation(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(separation_experiment(FlipNoiseModel{}, 20000, 5, mode(state)));
}

void BM_PinskerSweep(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(pinsker_sweep(20000, 10, 7, mode(state)));
}

}  // namespace

BENCHMARK(BM_Plan)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Simulate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossMethod)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreMethod)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pd)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Separation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PinskerSweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
