#include <benchmark/benchmark.h>

#include "rig/nn/kernels.hpp"
#include "rig/nn/random.hpp"

using rig::nn::KernelBank;
using rig::nn::Tensor;

namespace {

Tensor<float> random_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
  rig::nn::Rng rng(seed);
  Tensor<float> t(std::move(dims));
  for (float& v : t.storage()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const Tensor<float> x = random_tensor({c, hw, hw}, 1);
  KernelBank<float> k(c, c, 3, true);
  k.weights = random_tensor({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rig::nn::conv2d(x, k, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 9 * hw * hw));
}
BENCHMARK(BM_Conv2d3x3)->Args({8, 64})->Args({16, 32})->Args({32, 16})->Args({64, 8});

void BM_GlobalAvgPool(benchmark::State& state) {
  const Tensor<float> x = random_tensor({32, 64, 64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(rig::nn::global_avg_pool(x));
}
BENCHMARK(BM_GlobalAvgPool);

}  // namespace
