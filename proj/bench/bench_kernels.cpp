// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "genrestat/features.hpp"
#include "genrestat/kernels.hpp"
#include "genrestat/rng.hpp"

using namespace genrestat;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = uniform01(rng) - 0.5;
  return v;
}

kernels::GemmArgs square(std::size_t n, const std::vector<double>& a, const std::vector<double>& b,
                         std::vector<double>& c) {
  kernels::GemmArgs g;
  g.m = g.n = g.k = n;
  g.a = a.data();
  g.b = b.data();
  g.c = c.data();
  g.lda = g.ldb = g.ldc = n;
  return g;
}

template <void (*Gemm)(const kernels::GemmArgs&)>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  const auto g = square(n, a, b, c);
  for (auto _ : state) {
    Gemm(g);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

kernels::ConvShape conv_shape(const benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  return {c, c, 16, 31};
}

void BM_ConvSerial(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = random_values(s.in_channels * s.plane(), 3);
  const auto w = random_values(s.out_channels * s.patch(), 4);
  std::vector<double> out(s.out_channels * s.plane());
  for (auto _ : state) {
    kernels::serial::conv3x3_forward(s, x.data(), w.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ConvOmp(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = random_values(s.in_channels * s.plane(), 3);
  const auto w = random_values(s.out_channels * s.patch(), 4);
  std::vector<double> out(s.out_channels * s.plane()), scratch(s.patch() * s.plane());
  for (auto _ : state) {
    kernels::omp::conv3x3_forward(s, x.data(), w.data(), out.data(), scratch);
    benchmark::DoNotOptimize(out.data());
  }
}

std::vector<Segment> tone_segments(std::size_t count) {
  std::vector<Segment> segs(count);
  for (std::size_t i = 0; i < count; ++i) {
    segs[i].samples.resize(kSegmentSamples);
    for (std::size_t n = 0; n < kSegmentSamples; ++n)
      segs[i].samples[n] = static_cast<float>(0.3 * std::sin(2.0 * M_PI * (300.0 + 100.0 * i) * n / kPipelineRate));
    segs[i].index = i;
  }
  return segs;
}

template <std::vector<features::LogMelSpectrogram> (*Batch)(std::span<const Segment>,
                                                            const features::MelFilterbank&)>
void BM_LogMel(benchmark::State& state) {
  const auto segs = tone_segments(static_cast<std::size_t>(state.range(0)));
  const auto fb = features::MelFilterbank::build();
  for (auto _ : state) benchmark::DoNotOptimize(Batch(segs, fb));
}

}  // namespace

BENCHMARK(BM_Gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<kernels::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvSerial)->Name("conv3x3/serial")->Arg(8)->Arg(32);
BENCHMARK(BM_ConvOmp)->Name("conv3x3/omp")->Arg(8)->Arg(32);
BENCHMARK(BM_LogMel<features::serial::log_mel_batch>)->Name("log_mel_batch/serial")->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogMel<features::omp::log_mel_batch>)->Name("log_mel_batch/omp")->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
