// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <complex>
#include <vector>

#include "qmat/engine.hpp"
#include "qmat/precoding.hpp"
#include "qmat/quantizer.hpp"
#include "qmat/rng.hpp"

using namespace qmat;

namespace {
SimParams bench_params(int K, double alpha, double P, int rounds) {
  SimParams p;
  p.K = K;
  p.M = K;
  p.P = P;
  p.alpha = alpha;
  p.rounds = rounds;
  p.mode = FidelityMode::SinrExponent;
  p.seed = 7;
  return p;
}
}

static void BM_BuildCodebook(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_codebook(1.0, 0.5, 1e8, 1.0));
  }
}
BENCHMARK(BM_BuildCodebook);

static void BM_TwoStepQuantize(benchmark::State& state) {
  TwoStepSpec spec = two_step_spec(0.25, 1e6, 1.0);
  Rng rng = make_rng(21);
  std::vector<std::complex<double>> samples(1024);
  for (auto& s : samples) s = complex_gaussian(rng, 1e4);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(two_step_quantize(spec, samples[i++ % samples.size()]));
  }
}
BENCHMARK(BM_TwoStepQuantize);

static void BM_ZfBeamformer(benchmark::State& state) {
  const int M = static_cast<int>(state.range(0));
  Rng rng = make_rng(33);
  std::vector<Eigen::RowVectorXcd> rows;
  for (int i = 0; i < M - 1; ++i) {
    Eigen::RowVectorXcd h(M);
    for (int c = 0; c < M; ++c) h(c) = complex_gaussian(rng);
    rows.push_back(h);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(zf_beamformer(rows, M, rng));
  }
}
BENCHMARK(BM_ZfBeamformer)->Arg(2)->Arg(4)->Arg(8);

static void BM_EngineRun(benchmark::State& state) {
  const int K = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Engine engine(bench_params(K, 0.5, 1e6, 2));
    benchmark::DoNotOptimize(engine.run());
  }
}
BENCHMARK(BM_EngineRun)->Arg(2)->Arg(3)->Arg(4);

static void BM_DecodeUser(benchmark::State& state) {
  Engine engine(bench_params(3, 0.5, 1e6, 2));
  const Transcript& tr = engine.run();
  int user = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_user(tr, user));
    user = user % 3 + 1;
  }
}
BENCHMARK(BM_DecodeUser);

BENCHMARK_MAIN();
