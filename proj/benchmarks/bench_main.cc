// Microbenchmarks for the hot paths: the encoder forward pass, both
// decoders against the full entity table, and per-query ranking.

#include <benchmark/benchmark.h>

#include <vector>

#include "kge/config.h"
#include "kge/decoders.h"
#include "kge/evaluation.h"
#include "kge/model.h"
#include "kge/rng.h"
#include "kge/training.h"

namespace {

using namespace kge;

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

// Batch of 256 queries over FB15k-237 sized tables, eval mode.
void BM_ModelScore(benchmark::State& state, DecoderKind kind) {
  ModelConfig cfg;
  cfg.decoder = kind;
  cfg.dim = static_cast<std::size_t>(state.range(0));
  Model<float> model(cfg, 14541, 237);
  Rng rng(1);
  std::vector<int> s(256), r(256);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<int>(rng.below(14541));
    r[i] = static_cast<int>(rng.below(474));
  }
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    benchmark::DoNotOptimize(tape.value(model.score(tape, s, r, Mode::kEval, rng)).data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK_CAPTURE(BM_ModelScore, twomult, DecoderKind::kTwoMult)->Arg(32)->Arg(64)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ModelScore, tucker, DecoderKind::kTucker)->Arg(32)->Arg(64)->Arg(100)->Unit(benchmark::kMillisecond);

// Encoder forward alone, batch 256.
void BM_Encode(benchmark::State& state) {
  ModelConfig cfg;
  cfg.dim = static_cast<std::size_t>(state.range(0));
  cfg.heads = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  EncoderParams<float> params(encoder_config(cfg), rng);
  const auto s = random_tensor({256, cfg.dim}, 3), r = random_tensor({256, cfg.dim}, 4);
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const auto out = encode(tape, tape.constant(s), tape.constant(r), params, Mode::kEval, rng);
    benchmark::DoNotOptimize(tape.value(out.relation).data());
  }
}
BENCHMARK(BM_Encode)->Args({100, 4})->Args({100, 64})->Args({100, 128})->Unit(benchmark::kMillisecond);

void BM_TwoMultDecoder(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  const auto q = random_tensor({256, d}, 5), e = random_tensor({14541, d}, 6);
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    benchmark::DoNotOptimize(tape.value(score_twomult(tape, tape.constant(q), tape.constant(e))).data());
  }
}
BENCHMARK(BM_TwoMultDecoder)->Arg(32)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TuckerDecoder(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  const auto s = random_tensor({256, d}, 7), r = random_tensor({256, d}, 8);
  const auto w = random_tensor({d, d, d}, 9), e = random_tensor({14541, d}, 10);
  for (auto _ : state) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const Var out = score_tucker(tape, tape.constant(s), tape.constant(r), tape.constant(w), tape.constant(e));
    benchmark::DoNotOptimize(tape.value(out).data());
  }
}
BENCHMARK(BM_TuckerDecoder)->Arg(32)->Arg(100)->Unit(benchmark::kMillisecond);

// One optimizer step (forward, BCE, backward, Adam) at FB15k-237 size.
void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  Trainer trainer(cfg, 14541, 237);
  TripleStore train;
  Rng rng(13);
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    train.triples.push_back({static_cast<int>(rng.below(14541)), static_cast<int>(rng.below(474)),
                             static_cast<int>(rng.below(14541))});
  }
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_epoch(train).mean_loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.batch_size));
}
BENCHMARK(BM_TrainStep)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_RankQuery(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto scores = random_tensor({n}, 11);
  std::vector<int> filter;
  for (int i = 0; i < 40; ++i) filter.push_back(i * 7);
  Rng rng(12);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rank_query<float>(scores.values(), 3, &filter, rng));
  }
}
BENCHMARK(BM_RankQuery)->Arg(14541)->Arg(40943);

}  // namespace
BENCHMARK_MAIN();
