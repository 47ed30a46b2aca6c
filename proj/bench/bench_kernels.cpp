#include <random>

#include <benchmark/benchmark.h>

#include "ilmfuse/beam_search.hpp"
#include "ilmfuse/decode_driver.hpp"
#include "ilmfuse/kernels.hpp"
#include "ilmfuse/lstm.hpp"
#include "toy_models.hpp"

using namespace ilmfuse;
using namespace ilmfuse::testing;

namespace {

struct AffineCase {
  Tensor w;
  std::vector<float> x, b;

  explicit AffineCase(int n) : w({n, n}), x(n), b(n) {
    std::mt19937 rng(1);
    std::uniform_real_distribution<float> d(-1, 1);
    for (auto& v : w.data()) v = d(rng);
    for (auto& v : x) v = d(rng);
    for (auto& v : b) v = d(rng);
  }
};

void BM_affine(benchmark::State& state) {
  const AffineCase c(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::affine(c.x, c.w, c.b));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_affine_reference(benchmark::State& state) {
  const AffineCase c(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::affine_reference(c.x, c.w, c.b));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_lstm_step(benchmark::State& state) {
  const int h = static_cast<int>(state.range(0));
  LmShape s;
  s.vocab = 8;
  s.embed_dim = h;
  s.hidden = h;
  s.layers = 2;
  const NeuralLm lm(random_lm(s, 2));
  auto st = lm.initial_state();
  for (auto _ : state) benchmark::DoNotOptimize(lm.step(st));
}

void BM_decode_set(benchmark::State& state) {
  RnntShape s;
  s.vocab = 32;
  s.enc_hidden = 64;
  s.enc_out_dim = 32;
  s.pred_hidden = 64;
  s.embed_dim = 16;
  s.joint_dim = 64;
  const RnntModel model(random_rnnt(s, 3));
  const auto set = synthetic_set(16, model.vocabulary(), 3, 4, 6, 20);
  const DecodeModels m{&model, nullptr, nullptr, nullptr};
  SearchOptions opt;
  opt.beam = 4;
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(decode_set(set, m, {}, opt, jobs));
}

}  // namespace

BENCHMARK(BM_affine)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_affine_reference)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_lstm_step)->Arg(32)->Arg(256);
BENCHMARK(BM_decode_set)->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

BENCHMARK_MAIN();
