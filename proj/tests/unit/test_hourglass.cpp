#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rig/hourglass.hpp"

using rig::hourglass::HourglassConfig;
using rig::hourglass::HourglassState;
using rig::hourglass::RhnStack;
using rig::hourglass::RhnUnit;
using rig::nn::ParameterSet;
using rig::nn::Rng;
using rig::nn::Tensor;
using rig::nn::Var;

namespace {

HourglassConfig desk(std::size_t repetitions = 1, bool bias = true) {
  HourglassConfig c;
  c.levels = 3;
  c.base_channels = 8;
  c.repetitions = repetitions;
  c.use_bias = bias;
  return c;
}

std::uint64_t hash_of(const Tensor<double>& t) {
  return rig::nn::fnv1a64(t.data(), t.size() * sizeof(double));
}

using Dims = std::vector<std::size_t>;

}  // namespace

TEST(RhnUnit, LevelShapes) {
  ParameterSet<double> params(1);
  RhnUnit<double> unit(params, "u", desk(), 8);
  Rng rng(1);
  const auto state = unit.forward(Var<double>::constant(oracle::random_tensor(rng, {8, 32, 32})), nullptr);
  ASSERT_EQ(state.encoder.size(), 3u);
  ASSERT_EQ(state.decoder.size(), 3u);
  EXPECT_EQ(state.encoder[0].dims(), (Dims{8, 32, 32}));
  EXPECT_EQ(state.encoder[1].dims(), (Dims{16, 16, 16}));
  EXPECT_EQ(state.encoder[2].dims(), (Dims{32, 8, 8}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(state.decoder[j].dims(), state.encoder[j].dims());
}

TEST(RhnUnit, ZeroParametersGiveZeroStates) {
  ParameterSet<double> params(2);
  RhnUnit<double> unit(params, "u", desk(1, false), 3);
  params.zero_values();
  Rng rng(2);
  const auto state = unit.forward(Var<double>::constant(oracle::random_tensor(rng, {3, 16, 16})), nullptr);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(state.encoder[j].value(), Tensor<double>(state.encoder[j].dims()));
    EXPECT_EQ(state.decoder[j].value(), Tensor<double>(state.decoder[j].dims()));
  }
}

TEST(RhnUnit, GoldenDecoderHash) {
  ParameterSet<double> params(42);
  RhnUnit<double> unit(params, "u", desk(), 8);
  Rng rng(42);
  const auto state = unit.forward(Var<double>::constant(oracle::random_tensor(rng, {8, 16, 16})), nullptr);
  EXPECT_EQ(hash_of(state.decoder[0].value()), 0xe3a44a658680c5ebull);
}

TEST(RhnUnit, RejectsIndivisibleInput) {
  ParameterSet<double> params(1);
  RhnUnit<double> unit(params, "u", desk(), 2);
  EXPECT_THROW(unit.forward(Var<double>::constant(Tensor<double>({2, 12, 10})), nullptr),
               std::invalid_argument);
}

TEST(RhnUnit, RejectsMismatchedPreviousState) {
  ParameterSet<double> params(1);
  RhnUnit<double> first(params, "a", desk(), 8);
  RhnUnit<double> second(params, "b", desk(), 8);
  const auto prev = first.forward(Var<double>::constant(Tensor<double>({8, 16, 16}, 0.5)), nullptr);
  EXPECT_THROW(second.forward(Var<double>::constant(Tensor<double>({8, 32, 32}, 0.5)), &prev),
               std::invalid_argument);
}

TEST(RhnStack, SingleRepetitionEqualsUnit) {
  ParameterSet<double> stack_params(5), unit_params(5);
  RhnStack<double> stack(stack_params, "s", desk(1), 4);
  // Same parameter names, so the same initial values.
  RhnUnit<double> unit(unit_params, "s.rhn1", desk(1), 4);
  Rng rng(5);
  const Var<double> x = Var<double>::constant(oracle::random_tensor(rng, {4, 16, 16}));
  const auto a = stack.forward(x);
  const auto b = unit.forward(x, nullptr);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a.decoder[j].value(), b.decoder[j].value());
}

TEST(RhnStack, ParameterCountScalesWithRepetitions) {
  ParameterSet<double> p1(1), p2(1);
  // Input width equal to the level-1 width makes every unit the same size.
  RhnStack<double> one(p1, "s", desk(1), 8);
  RhnStack<double> two(p2, "s", desk(2), 8);
  EXPECT_EQ(two.parameter_count(), 2 * one.parameter_count());
  EXPECT_EQ(p2.element_count(), 2 * p1.element_count());
}

TEST(RhnStack, ThreeRepetitionsStayFinite) {
  ParameterSet<double> params(3);
  RhnStack<double> stack(params, "s", desk(3), 3);
  Rng rng(3);
  const auto states =
      stack.forward_all(Var<double>::constant(oracle::random_tensor(rng, {3, 32, 32}, 0, 1)));
  ASSERT_EQ(states.size(), 3u);
  for (const auto& s : states) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_TRUE(s.encoder[j].value().all_finite());
      EXPECT_TRUE(s.decoder[j].value().all_finite());
    }
  }
}

TEST(RhnStack, GradientReachesEveryParameter) {
  ParameterSet<double> params(4);
  RhnStack<double> stack(params, "s", desk(2), 3);
  Rng rng(4);
  const auto state = stack.forward(Var<double>::constant(oracle::random_tensor(rng, {3, 16, 16})));
  rig::nn::backward(rig::nn::weighted_total(state.decoder[0],
                                            oracle::random_tensor(rng, state.decoder[0].dims())));
  for (const auto& e : params.entries()) {
    const Tensor<double>& g = e.var.grad();
    ASSERT_FALSE(g.empty()) << e.name;
    bool any = false;
    for (double v : g.storage()) any = any || v != 0.0;
    EXPECT_TRUE(any) << e.name;
  }
}

TEST(RhnStack, DeterministicAcrossBuilds) {
  Rng rng(6);
  const Tensor<double> x = oracle::random_tensor(rng, {3, 16, 16});
  ParameterSet<double> pa(9), pb(9);
  RhnStack<double> a(pa, "s", desk(2), 3), b(pb, "s", desk(2), 3);
  EXPECT_EQ(pa.checksum(), pb.checksum());
  EXPECT_EQ(a.forward(Var<double>::constant(x)).decoder[0].value(),
            b.forward(Var<double>::constant(x)).decoder[0].value());
}

TEST(HourglassConfig, ChannelScheduleIsCapped) {
  HourglassConfig c = desk();
  c.levels = 5;
  c.base_channels = 16;
  EXPECT_EQ(c.channels_at(1), 16u);
  EXPECT_EQ(c.channels_at(3), 64u);
  EXPECT_EQ(c.channels_at(5), 64u);
  c.levels = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
