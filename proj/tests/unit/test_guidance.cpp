#include <gtest/gtest.h>

#include <algorithm>
#include <array>

#include "oracles.hpp"
#include "rig/guidance.hpp"
#include "rig/memcost.hpp"

using namespace rig::guidance;
using rig::nn::ParameterSet;
using rig::nn::Rng;
using rig::nn::Tensor;
using rig::nn::Var;

namespace {

Var<double> random_map(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
  return Var<double>::constant(oracle::random_tensor(rng, {c, h, w}));
}

void zero(Var<double>& v) { v.mutable_value().fill(0.0); }

void zero(const ParameterSet<double>& params, const std::string& name) {
  const auto* entry = params.find(name);
  ASSERT_NE(entry, nullptr) << name;
  Var<double> handle = entry->var;  // shares the node
  zero(handle);
}

void randomize(ParameterSet<double>& params, Rng& rng, double scale) {
  for (auto& e : params.entries()) {
    for (double& v : e.var.mutable_value().storage()) v = rng.uniform(-scale, scale);
  }
}

Tensor<double> eg_oracle(const EfficientGuidance<double>& eg, const Tensor<double>& img,
                         const Tensor<double>& dep) {
  return oracle::efficient_guidance(img, dep, eg.gate_conv.weight.value(),
                                    eg.gate_conv.bias ? eg.gate_conv.bias.value() : Tensor<double>(),
                                    eg.mix_generator.weight.value(),
                                    eg.mix_generator.bias ? eg.mix_generator.bias.value()
                                                          : Tensor<double>());
}

const GuidanceOptions kOpts{};

}  // namespace

TEST(DynamicConvG1, IdentityKernelsPassDepthThrough) {
  ParameterSet<double> params(1);
  DynamicConvG1<double> g1(params, "g1", 1, kOpts);
  zero(g1.generator.weight);  // kernels reduce to the one-hot centre-tap bias
  Rng rng(1);
  const Var<double> img = random_map(rng, 1, 6, 5), dep = random_map(rng, 1, 6, 5);
  EXPECT_EQ(g1.forward(img, dep).value(), dep.value());
}

TEST(DynamicConvG1, ZeroImageAndBiasGiveZero) {
  ParameterSet<double> params(2);
  DynamicConvG1<double> g1(params, "g1", 2, kOpts);
  zero(g1.generator.bias);
  Rng rng(2);
  const Var<double> img = Var<double>::constant(Tensor<double>({2, 4, 4}));
  EXPECT_EQ(g1.forward(img, random_map(rng, 2, 4, 4)).value(), Tensor<double>({2, 4, 4}));
}

TEST(DynamicConvG1, MatchesPerPixelOracle) {
  ParameterSet<double> params(3);
  DynamicConvG1<double> g1(params, "g1", 2, kOpts);
  Rng rng(3);
  randomize(params, rng, 0.5);
  const Var<double> img = random_map(rng, 2, 4, 4), dep = random_map(rng, 2, 4, 4);
  const Tensor<double> kernels = g1.generator(img).value();
  ASSERT_EQ(kernels.channels(), 2u * 2u * 9u);
  EXPECT_LT(oracle::max_rel_diff(g1.forward(img, dep).value(),
                                 oracle::per_pixel_dynamic_conv(dep.value(), kernels, 3)),
            1e-10);
}

TEST(DynamicConvG1, BudgetIsEnforced) {
  GuidanceOptions tight;
  tight.dynamic_budget_bytes = 1000;
  ParameterSet<double> params(4);
  DynamicConvG1<double> g1(params, "g1", 2, tight);
  Rng rng(4);
  EXPECT_THROW(g1.forward(random_map(rng, 2, 8, 8), random_map(rng, 2, 8, 8)), BudgetError);
}

TEST(DynamicConvG1, RejectsShapeMismatch) {
  ParameterSet<double> params(5);
  DynamicConvG1<double> g1(params, "g1", 2, kOpts);
  Rng rng(5);
  EXPECT_THROW(g1.forward(random_map(rng, 2, 4, 4), random_map(rng, 2, 4, 5)), std::invalid_argument);
  EXPECT_THROW(g1.forward(random_map(rng, 3, 4, 4), random_map(rng, 3, 4, 4)), std::invalid_argument);
}

TEST(ConvFactorizedCF, IdentityKernelsAndMixPassDepthThrough) {
  ParameterSet<double> params(6);
  ConvFactorizedCF<double> cf(params, "cf", 3, kOpts);
  zero(cf.depthwise_generator.weight);
  zero(cf.mix_generator.weight);
  Rng rng(6);
  const Var<double> img = random_map(rng, 3, 4, 6), dep = random_map(rng, 3, 4, 6);
  EXPECT_EQ(cf.forward(img, dep).value(), dep.value());
}

TEST(ConvFactorizedCF, MatchesDepthwiseThenMixOracle) {
  ParameterSet<double> params(7);
  ConvFactorizedCF<double> cf(params, "cf", 3, kOpts);
  Rng rng(7);
  randomize(params, rng, 0.5);
  const Var<double> img = random_map(rng, 3, 5, 4), dep = random_map(rng, 3, 5, 4);
  const Tensor<double> kernels = cf.depthwise_generator(img).value();
  const std::vector<double> mix =
      oracle::affine(cf.mix_generator.weight.value(), cf.mix_generator.bias.value(),
                     oracle::pool_mean(img.value()));
  const Tensor<double> want =
      oracle::depthwise_then_mix(dep.value(), kernels, 3, Tensor<double>({9}, mix));
  EXPECT_LT(oracle::max_rel_diff(cf.forward(img, dep).value(), want), 1e-10);
}

TEST(ConvFactorizedCF, SingleChannelAgreesWithDynamicConv) {
  ParameterSet<double> pa(8), pb(8);
  DynamicConvG1<double> g1(pa, "g1", 1, kOpts);
  ConvFactorizedCF<double> cf(pb, "cf", 1, kOpts);
  Rng rng(8);
  randomize(pa, rng, 0.5);
  cf.depthwise_generator.weight.mutable_value() = g1.generator.weight.value();
  cf.depthwise_generator.bias.mutable_value() = g1.generator.bias.value();
  zero(cf.mix_generator.weight);
  cf.mix_generator.bias.mutable_value().fill(1.0);
  const Var<double> img = random_map(rng, 1, 6, 6), dep = random_map(rng, 1, 6, 6);
  EXPECT_LT(oracle::max_rel_diff(cf.forward(img, dep).value(), g1.forward(img, dep).value()),
            1e-10);
}

TEST(EfficientGuidance, InitialGateIsNearOne) {
  ParameterSet<double> params(9);
  EfficientGuidance<double> eg(params, "eg", 4, kOpts);
  Rng rng(9);
  const Var<double> img = random_map(rng, 4, 8, 8), dep = random_map(rng, 4, 8, 8);
  const std::array<Var<double>, 2> pair{img, dep};
  const Tensor<double> gate =
      rig::nn::global_avg_pool(eg.gate_conv(rig::nn::concat_channels<double>(pair))).value();
  for (double g : gate.storage()) EXPECT_NEAR(g, 1.0, 0.05);
}

TEST(EfficientGuidance, NeutralGateAndIdentityMixPassDepthThrough) {
  ParameterSet<double> params(10);
  EfficientGuidance<double> eg(params, "eg", 3, kOpts);
  zero(eg.gate_conv.weight);  // bias stays at 1
  zero(eg.mix_generator.weight);
  Rng rng(10);
  const Var<double> img = random_map(rng, 3, 4, 4), dep = random_map(rng, 3, 4, 4);
  EXPECT_EQ(eg.forward(img, dep).value(), dep.value());
}

TEST(EfficientGuidance, ZeroDepthGivesZero) {
  ParameterSet<double> params(11);
  EfficientGuidance<double> eg(params, "eg", 3, kOpts);
  Rng rng(11);
  randomize(params, rng, 1.0);
  const Var<double> dep = Var<double>::constant(Tensor<double>({3, 4, 4}));
  EXPECT_EQ(eg.forward(random_map(rng, 3, 4, 4), dep).value(), Tensor<double>({3, 4, 4}));
}

TEST(EfficientGuidance, MatchesStraightLineOracle) {
  ParameterSet<double> params(12);
  EfficientGuidance<double> eg(params, "eg", 3, kOpts);
  Rng rng(12);
  randomize(params, rng, 0.5);
  const Var<double> img = random_map(rng, 3, 6, 5), dep = random_map(rng, 3, 6, 5);
  EXPECT_LT(oracle::max_rel_diff(eg.forward(img, dep).value(), eg_oracle(eg, img.value(), dep.value())),
            1e-10);
}

TEST(Footprint, MatchesMemoryModel) {
  const std::size_t C = 4, H = 8, W = 6, R = 3;
  Rng rng(13);
  const Var<double> img = random_map(rng, C, H, W), dep = random_map(rng, C, H, W);
  ParameterSet<double> params(13);
  const auto cost = rig::memcost::cost(C, H, W, R, sizeof(double));
  const auto tally_of = [&](const GuidanceUnit<double>& unit) {
    Footprint f;
    unit.forward(img, dep, &f);
    return f.total() * sizeof(double);
  };
  EXPECT_EQ(tally_of(EfficientGuidance<double>(params, "eg", C, kOpts)), cost.bytes_eg);
  EXPECT_EQ(tally_of(ConvFactorizedCF<double>(params, "cf", C, kOpts)), cost.bytes_cf);
  EXPECT_EQ(tally_of(DynamicConvG1<double>(params, "g1", C, kOpts)), cost.bytes_dc);
}

TEST(AdaptiveFusion, SingleBranchIsIdentity) {
  ParameterSet<double> params(14);
  AdaptiveFusion<double> af(params, "af", 3, 1, true);
  Rng rng(14);
  randomize(params, rng, 2.0);
  const Var<double> b = random_map(rng, 3, 4, 4);
  EXPECT_EQ(af.forward({b}).value(), b.value());
}

TEST(AdaptiveFusion, IdenticalBranchesReturnTheBranch) {
  ParameterSet<double> params(15);
  AdaptiveFusion<double> af(params, "af", 3, 2, true);
  Rng rng(15);
  randomize(params, rng, 2.0);
  const Var<double> b = random_map(rng, 3, 4, 4);
  const Tensor<double> out = af.forward({b, b}).value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], b.value()[i], 1e-14);
}

TEST(AdaptiveFusion, OneHotWeightsSelectBranch) {
  ParameterSet<double> params(16);
  AdaptiveFusion<double> af(params, "af", 2, 3, true);
  zero(af.logits.weight);
  Tensor<double>& bias = af.logits.bias.mutable_value();  // k x C logits, row-major
  bias.fill(0.0);
  bias[0] = bias[1] = 1000.0;
  Rng rng(16);
  const Var<double> a = random_map(rng, 2, 4, 4), b = random_map(rng, 2, 4, 4),
                    c = random_map(rng, 2, 4, 4);
  Var<double> alpha;
  EXPECT_EQ(af.forward({a, b, c}, &alpha).value(), a.value());
  EXPECT_EQ(alpha.value().storage(), (std::vector<double>{1, 1, 0, 0, 0, 0}));
}

TEST(AdaptiveFusion, ConvexHullAndNormalization) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng.below(4), c = 1 + rng.below(4);
    ParameterSet<double> params(100 + trial);
    AdaptiveFusion<double> af(params, "af", c, k, true);
    randomize(params, rng, 3.0);
    std::vector<Var<double>> branches;
    for (std::size_t n = 0; n < k; ++n) branches.push_back(random_map(rng, c, 4, 4));
    Var<double> alpha;
    const Tensor<double> out = af.forward(branches, &alpha).value();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t n = 0; n < k; ++n) sum += alpha.value()[n * c + ch];
      ASSERT_NEAR(sum, 1.0, 1e-12);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      double lo = branches[0].value()[i], hi = lo;
      for (const auto& b : branches) {
        lo = std::min(lo, b.value()[i]);
        hi = std::max(hi, b.value()[i]);
      }
      ASSERT_GE(out[i], lo - 1e-12 * std::fabs(lo));
      ASSERT_LE(out[i], hi + 1e-12 * std::fabs(hi));
    }
  }
}

TEST(AdaptiveFusion, RejectsBadBranches) {
  ParameterSet<double> params(18);
  AdaptiveFusion<double> af(params, "af", 2, 2, true);
  Rng rng(18);
  EXPECT_THROW(af.forward({}), std::invalid_argument);
  EXPECT_THROW(af.forward({random_map(rng, 2, 4, 4), random_map(rng, 2, 4, 2)}), std::invalid_argument);
}

TEST(RepetitiveGuidance, SingleRepetitionEqualsUnit) {
  ParameterSet<double> pa(19), pb(19);
  RepetitiveGuidance<double> rg(pa, "rg", 3, 1, GuidanceKind::efficient, FusionMode::last, kOpts);
  EfficientGuidance<double> eg(pb, "rg.rep1.eg", 3, kOpts);
  EXPECT_EQ(pa.checksum(), pb.checksum());
  Rng rng(19);
  const Var<double> img = random_map(rng, 3, 4, 4), dep = random_map(rng, 3, 4, 4);
  EXPECT_EQ(rg.forward(img, dep).value(), eg.forward(img, dep).value());
}

TEST(RepetitiveGuidance, AddWithSilentSecondBranchEqualsFirst) {
  ParameterSet<double> params(20);
  RepetitiveGuidance<double> rg(params, "rg", 3, 2, GuidanceKind::efficient, FusionMode::add, kOpts);
  zero(params, "rg.rep2.eg.mix_gen.weight");
  zero(params, "rg.rep2.eg.mix_gen.bias");
  Rng rng(20);
  const Var<double> img = random_map(rng, 3, 4, 4), dep = random_map(rng, 3, 4, 4);
  EXPECT_EQ(rg.forward(img, dep).value(), rg.unit(0).forward(img, dep).value());
}

TEST(RepetitiveGuidance, ThreeRepetitionsMatchUnrolledOracle) {
  ParameterSet<double> params(21);
  RepetitiveGuidance<double> rg(params, "rg", 2, 3, GuidanceKind::efficient, FusionMode::last, kOpts);
  Rng rng(21);
  randomize(params, rng, 0.5);
  const Var<double> img = random_map(rng, 2, 6, 6), dep = random_map(rng, 2, 6, 6);
  const auto& eg = [&](std::size_t n) -> const EfficientGuidance<double>& {
    return dynamic_cast<const EfficientGuidance<double>&>(rg.unit(n));
  };
  Tensor<double> d = eg_oracle(eg(0), img.value(), dep.value());
  for (std::size_t n = 1; n < 3; ++n) {
    const auto& refine = rg.refinement(n - 1);
    const Tensor<double> refined = oracle::relu(
        oracle::direct_conv(img.value(), refine.weight.value(), &refine.bias.value(), 1, 1));
    d = eg_oracle(eg(n), refined, d);
  }
  GuidanceStage<double> stage;
  const Tensor<double> got = rg.forward(img, dep, &stage).value();
  EXPECT_LT(oracle::max_rel_diff(got, d), 1e-10);
  EXPECT_EQ(stage.repetitions, 3u);
  EXPECT_EQ(stage.branches.size(), 3u);
}

TEST(RepetitiveGuidance, EveryFusionModeKeepsShape) {
  Rng rng(22);
  const Var<double> img = random_map(rng, 3, 4, 4), dep = random_map(rng, 3, 4, 4);
  for (FusionMode mode : {FusionMode::last, FusionMode::add, FusionMode::concat, FusionMode::adaptive}) {
    for (GuidanceKind kind : {GuidanceKind::dynamic_conv, GuidanceKind::factorized, GuidanceKind::efficient}) {
      ParameterSet<double> params(22);
      RepetitiveGuidance<double> rg(params, "rg", 3, 2, kind, mode, kOpts);
      const Tensor<double> out = rg.forward(img, dep).value();
      EXPECT_EQ(out.dims(), dep.value().dims()) << to_string(mode) << " " << to_string(kind);
      EXPECT_TRUE(out.all_finite());
    }
  }
}

TEST(RepetitiveGuidance, RejectsZeroRepetitions) {
  ParameterSet<double> params(23);
  EXPECT_THROW(RepetitiveGuidance<double>(params, "rg", 2, 0, GuidanceKind::efficient,
                                          FusionMode::last, kOpts),
               std::invalid_argument);
}

TEST(FusionMode, ParsesNames) {
  EXPECT_EQ(parse_fusion_mode("adaptive"), FusionMode::adaptive);
  EXPECT_EQ(parse_guidance_kind("g1"), GuidanceKind::dynamic_conv);
  EXPECT_THROW(parse_fusion_mode("max"), std::invalid_argument);
}
