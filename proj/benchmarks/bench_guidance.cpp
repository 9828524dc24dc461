#include <benchmark/benchmark.h>

#include "rig/guidance.hpp"
#include "rig/nn/random.hpp"

using namespace rig::guidance;
using rig::nn::ParameterSet;
using rig::nn::Tensor;
using rig::nn::Var;

namespace {

Var<float> random_map(std::size_t c, std::size_t hw, std::uint64_t seed) {
  rig::nn::Rng rng(seed);
  Tensor<float> t({c, hw, hw});
  for (float& v : t.storage()) v = static_cast<float>(rng.uniform(-1, 1));
  return Var<float>::constant(std::move(t));
}

// One guidance unit forward at C channels on a 32x32 map.
void run_unit(benchmark::State& state, GuidanceKind kind) {
  const auto c = static_cast<std::size_t>(state.range(0));
  ParameterSet<float> params(1);
  const auto unit = make_guidance_unit<float>(kind, params, "u", c, GuidanceOptions{});
  const Var<float> img = random_map(c, 32, 2), dep = random_map(c, 32, 3);
  Footprint fp;
  for (auto _ : state) {
    fp = {};
    benchmark::DoNotOptimize(unit->forward(img, dep, &fp));
  }
  state.counters["intermediate_elems"] = static_cast<double>(fp.total());
}

void BM_DynamicConvG1(benchmark::State& s) { run_unit(s, GuidanceKind::dynamic_conv); }
void BM_FactorizedCF(benchmark::State& s) { run_unit(s, GuidanceKind::factorized); }
void BM_EfficientEG(benchmark::State& s) { run_unit(s, GuidanceKind::efficient); }

BENCHMARK(BM_DynamicConvG1)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_FactorizedCF)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_EfficientEG)->Arg(4)->Arg(8)->Arg(16);

}  // namespace
