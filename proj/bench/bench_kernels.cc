// Parallel block-sum kernels vs the serial direct-summation reference.
//
//   ./build/bench/astws_bench --benchmark_filter=Stats
//
// OMP_NUM_THREADS controls the parallel side.

#include <random>
#include <vector>

#include "astws/attention.hpp"
#include "astws/stft.hpp"
#include "astws/wiener.hpp"
#include "benchmark/benchmark.h"

namespace astws {
namespace {

constexpr int kWindow = 100;

struct Inputs {
  Spectrogram far;
  Spectrogram mic;
  UnfoldedFarEnd x_unf;
};

// Noise far end, mic = far delayed by one frame plus noise.
Inputs make_inputs(double seconds, int taps) {
  const size_t n = static_cast<size_t>(seconds * 16000);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 0.1);
  std::vector<double> far(n), mic(n);
  for (double& v : far) v = normal(rng);
  for (size_t i = 0; i < n; ++i) mic[i] = (i >= 80 ? 0.5 * far[i - 80] : 0.0) + normal(rng);
  Inputs in{stft(far), stft(mic), {}};
  in.x_unf = unfold(in.far, taps);
  return in;
}

void BM_AccumulateStats(benchmark::State& state) {
  const Inputs in = make_inputs(1.0, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(accumulate_stats(in.x_unf, in.mic, kWindow));
}

void BM_AccumulateStatsReference(benchmark::State& state) {
  const Inputs in = make_inputs(1.0, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::accumulate_stats(in.x_unf, in.mic, kWindow));
  }
}

void BM_Solve(benchmark::State& state) {
  const Inputs in = make_inputs(1.0, static_cast<int>(state.range(0)));
  const WienerStats stats = accumulate_stats(in.x_unf, in.mic, kWindow);
  for (auto _ : state) benchmark::DoNotOptimize(solve(stats, 1e-3));
}

void BM_SolveReference(benchmark::State& state) {
  const Inputs in = make_inputs(1.0, static_cast<int>(state.range(0)));
  const WienerStats stats = accumulate_stats(in.x_unf, in.mic, kWindow);
  for (auto _ : state) benchmark::DoNotOptimize(reference::solve(stats, 1e-3));
}

void BM_SubtractEcho(benchmark::State& state) {
  const Inputs in = make_inputs(1.0, static_cast<int>(state.range(0)));
  const WienerFilter h = solve(accumulate_stats(in.x_unf, in.mic, kWindow), 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(subtract_echo(in.mic, in.x_unf, h));
}

void BM_SubtractEchoReference(benchmark::State& state) {
  const Inputs in = make_inputs(1.0, static_cast<int>(state.range(0)));
  const WienerFilter h = solve(accumulate_stats(in.x_unf, in.mic, kWindow), 1e-3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::subtract_echo(in.mic, in.x_unf, h));
  }
}

// Fused per-bin pipeline vs the three reference stages in sequence.
void BM_Pipeline(benchmark::State& state) {
  const int taps = static_cast<int>(state.range(0));
  const Inputs in = make_inputs(1.0, taps);
  WienerConfig cfg;
  cfg.taps = taps;
  for (auto _ : state) benchmark::DoNotOptimize(stws_pipeline(in.far, in.mic, cfg));
}

void BM_PipelineReference(benchmark::State& state) {
  const int taps = static_cast<int>(state.range(0));
  const Inputs in = make_inputs(1.0, taps);
  for (auto _ : state) {
    const UnfoldedFarEnd x_unf = unfold(in.far, taps);
    const WienerFilter h = reference::solve(reference::accumulate_stats(x_unf, in.mic, kWindow),
                                            1e-3);
    benchmark::DoNotOptimize(reference::subtract_echo(in.mic, x_unf, h));
  }
}

void BM_PipelineAttention(benchmark::State& state) {
  const int taps = static_cast<int>(state.range(0));
  const Inputs in = make_inputs(1.0, taps);
  WienerConfig cfg;
  cfg.taps = taps;
  const AttentionStatsSource source(AttentionParams::initialize(taps), AttentionOptions{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(stws_pipeline(in.far, in.mic, cfg, &source));
  }
}

BENCHMARK(BM_AccumulateStats)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AccumulateStatsReference)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Solve)->Arg(4)->Arg(8)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveReference)->Arg(4)->Arg(8)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SubtractEcho)->Arg(8)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SubtractEchoReference)->Arg(8)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pipeline)->Arg(8)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PipelineReference)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PipelineAttention)->Arg(8)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace astws

BENCHMARK_MAIN();
