#include <benchmark/benchmark.h>

#include "rig/data.hpp"
#include "rig/model.hpp"
#include "rig/trainer.hpp"

namespace {

void BM_RigNetForward(benchmark::State& state) {
  const rig::data::Sample s = rig::data::gen_scene(rig::data::DatasetSpec{}, 0);
  rig::model::RigNet<float> net(rig::model::RigNetConfig{}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(s.color, s.sparse, s.input_mask));
}
BENCHMARK(BM_RigNetForward)->Unit(benchmark::kMillisecond);

void BM_RigNetTrainStep(benchmark::State& state) {
  const rig::data::Sample s = rig::data::gen_scene(rig::data::DatasetSpec{}, 0);
  rig::model::RigNet<float> net(rig::model::RigNetConfig{}, 1);
  rig::trainer::Adam<float> adam(net.parameters());
  const rig::trainer::TrainConfig cfg;
  for (auto _ : state) {
    net.parameters().zero_grad();
    rig::nn::backward(rig::trainer::batch_loss(net, {&s}));
    adam.step(net.parameters(), 1e-5, cfg);
  }
}
BENCHMARK(BM_RigNetTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
