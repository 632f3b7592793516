#include <benchmark/benchmark.h>

#include <numeric>

#include "slotlab/eval.hpp"
#include "slotlab/models/cswm.hpp"
#include "slotlab/ops.hpp"
#include "slotlab/optim.hpp"
#include "slotlab/rng.hpp"

namespace {

using namespace slotlab;

Tensor<float> Random(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (float& x : t.mutable_data()) x = static_cast<float>(rng.Uniform(-1, 1));
  return t;
}

// Grid extractor shape: 50x50 RGB, 10x10 kernel, stride 10, 5 maps.
void BM_Conv2d(benchmark::State& state) {
  Rng rng(1);
  const std::size_t batch = state.range(0);
  const auto x = Random({batch, 3, 50, 50}, rng), k = Random({5, 3, 10, 10}, rng), b = Random({5}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(Conv2d(x, k, b, 10, 0));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv2d)->Arg(32)->Arg(512);

void BM_Linear(benchmark::State& state) {
  Rng rng(2);
  const std::size_t rows = state.range(0);
  const auto x = Random({rows, 512}, rng), w = Random({512, 512}, rng), b = Random({512}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(Linear(x, w, b));
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_Linear)->Arg(512)->Arg(2560);

// Edge aggregation for K = 5 slots, 512 features.
void BM_PairwiseNormReluSum(benchmark::State& state) {
  Rng rng(3);
  const std::size_t rows = state.range(0) * 5;
  const auto s = Random({rows, 512}, rng), t = Random({rows, 512}, rng);
  const auto g = Random({512}, rng), o = Random({512}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(PairwiseNormReluSum(s, t, g, o, 5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PairwiseNormReluSum)->Arg(64)->Arg(512);

// One full optimizer step of the default shapes model.
void BM_TrainStep(benchmark::State& state) {
  Rng rng(4);
  const std::size_t batch = state.range(0);
  models::CswmConfig config;
  models::CswmModel<float> model(config, 0);
  AdamState adam = MakeAdamState(model.params());
  Tensor<float> obs({batch, 3, 50, 50}), next({batch, 3, 50, 50}), actions({batch, 5, 4});
  for (float& x : obs.mutable_data()) x = static_cast<float>(rng.Uniform(0, 1));
  for (float& x : next.mutable_data()) x = static_cast<float>(rng.Uniform(0, 1));
  for (std::size_t i = 0; i < batch; ++i) actions.mutable_data()[i * 20 + rng.UniformInt(20)] = 1;
  std::vector<std::size_t> order(batch);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::rotate(order.begin(), order.begin() + 1, order.end());
  for (auto _ : state) {
    Tape<float> tape;
    Tensor<float> loss;
    {
      TapeScope<float> scope(tape);
      loss = models::CswmBatchLoss(model, obs, actions, next, order);
    }
    tape.Backward(loss);
    AdamStep(model.params(), adam);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

// Ranking one prediction against an evaluation-sized reference buffer.
void BM_RankOfTruth(benchmark::State& state) {
  Rng rng(5);
  const std::size_t n = state.range(0);
  const auto refs = Random({n, 10}, rng);
  const auto buffer = eval::ReferenceBuffer::FromTensor(refs);
  std::vector<float> pred(10, 0.1f);
  std::size_t truth = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::RankOfTruth(pred, truth, buffer));
    truth = (truth + 1) % n;
  }
}
BENCHMARK(BM_RankOfTruth)->Arg(1000)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
