#include <benchmark/benchmark.h>

#include <vector>

#include "stpn/model.hpp"
#include "stpn/train.hpp"
#include "support.hpp"

using namespace stpn;
using namespace stpn::testing;

namespace {

ModelConfig demo_config(std::size_t nodes) {
  ModelConfig c;
  c.nodes = nodes;
  c.heads = 2;
  c.pos_dim = 8;
  c.key_dim = 8;
  c.hidden_widths = {16, 16};
  c.se_reduction = 4;
  return c;
}

void BM_ModeProduct(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto mode = static_cast<Mode>(state.range(1));
  Rng rng(1);
  const Tensor3 x = random_tensor(rng, n, 12, 32);
  const std::size_t extent = mode == Mode::space ? n : mode == Mode::time ? 12 : 32;
  const Matrix u = random_matrix(rng, extent, extent);
  for (auto _ : state) benchmark::DoNotOptimize(mode_product(x, u, mode));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size() * extent));
}
BENCHMARK(BM_ModeProduct)->ArgsProduct({{8, 70, 200}, {0, 1, 2}});

// Same product through the Kronecker form, for comparison with the separable path.
void BM_KroneckerSpaceTime(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor3 x = random_tensor(rng, n, 12, 32);
  const Matrix s = random_matrix(rng, n, n), a = random_matrix(rng, 12, 12);
  for (auto _ : state) {
    const Matrix k = kronecker(naive_transpose(s), naive_transpose(a));
    benchmark::DoNotOptimize(matmul(k, unfold(x)));
  }
}
BENCHMARK(BM_KroneckerSpaceTime)->Arg(8)->Arg(70);

void BM_SeparableConv(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t heads = 4, c_in = 32, c_out = 32;
  Rng rng(3);
  const MultiGraph g = random_graph(rng, n);
  const auto supports = diffusion_supports(g, 2, true);
  const ad::Value h = random_tensor(rng, n, 12, c_in);
  std::vector<ad::Value> temporal, weights;
  for (std::size_t i = 0; i < heads; ++i) temporal.push_back(row_normalized(random_adjacency(rng, 12)));
  for (std::size_t i = 0; i < supports.size() * heads; ++i) weights.push_back(random_matrix(rng, c_in, c_out));
  for (auto _ : state) {
    ad::Tape tape;
    std::vector<ad::Var> t, w;
    for (const auto& m : temporal) t.push_back(tape.constant_ref(m));
    for (const auto& m : weights) w.push_back(tape.constant_ref(m));
    benchmark::DoNotOptimize(separable_conv(tape, tape.constant_ref(h), supports, t, w).tensor());
  }
}
BENCHMARK(BM_SeparableConv)->Arg(8)->Arg(70)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ModelConfig c = state.range(1) ? ModelConfig{} : demo_config(n);
  c.nodes = n;
  Rng rng(4);
  const MultiGraph g = random_graph(rng, n);
  const auto supports = model_supports(c, g);
  const auto params = init_params(c, 0);
  const WindowInput w = random_window(rng, c, n);
  for (auto _ : state) benchmark::DoNotOptimize(predict(c, params, supports, w.input()));
}
BENCHMARK(BM_Forward)->Args({8, 0})->Args({70, 0})->Args({70, 1})->Unit(benchmark::kMillisecond);

// One optimizer step: forward and backward over a batch, then Adam.
void BM_TrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto batch = static_cast<std::size_t>(state.range(1));
  const ModelConfig c = demo_config(n);
  Rng rng(5);
  const MultiGraph g = random_graph(rng, n);
  const auto supports = model_supports(c, g);
  auto params = init_params(c, 0);
  std::vector<WindowInput> inputs;
  std::vector<Tensor3> targets;
  for (std::size_t b = 0; b < batch; ++b) {
    inputs.push_back(random_window(rng, c, n));
    targets.push_back(random_tensor(rng, n, c.p, 2));
  }
  Mask3 mask(n, c.p, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < c.p; ++t) mask.set(i, t, 0, true), mask.set(i, t, 1, true);
  ad::Adam adam;
  for (auto _ : state) {
    ad::Tape tape;
    std::vector<ad::LossTerm> terms;
    for (std::size_t b = 0; b < batch; ++b)
      terms.push_back({forward(tape, c, params, supports, inputs[b].input()).output, &targets[b], &mask});
    const auto loss = ad::masked_rmse(terms);
    ad::assign_grads(params, tape.backward(loss.loss));
    adam.step(params);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_TrainStep)->Args({8, 32})->Args({70, 8})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
