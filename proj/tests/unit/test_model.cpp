#include <gtest/gtest.h>

#include <cmath>

#include "rig/data.hpp"
#include "rig/io.hpp"
#include "rig/model.hpp"
#include "rig/nn/random.hpp"
#include "rig/trainer.hpp"

using namespace rig;
using model::RigNet;
using model::RigNetConfig;
using nn::Tensor;
using nn::Var;

namespace {

std::size_t conv_count(std::size_t in, std::size_t out, std::size_t r) { return out * in * r * r + out; }
std::size_t linear_count(std::size_t in, std::size_t out) { return out * in + out; }

std::size_t unit_count(const hourglass::HourglassConfig& h, std::size_t input) {
  std::size_t n = 0, in = input;
  for (std::size_t j = 1; j <= h.levels; ++j) {
    const std::size_t c = h.channels_at(j);
    n += conv_count(in, c, 3) + h.encoder_depth * 2 * conv_count(c, c, 3);
    in = c;
  }
  n += conv_count(in, in, 3);
  for (std::size_t j = 1; j < h.levels; ++j) n += conv_count(h.channels_at(j + 1), h.channels_at(j), 3);
  return n;
}

// Closed-form tally for efficient guidance with adaptive fusion.
std::size_t rignet_count(const RigNetConfig& cfg) {
  const auto& h = cfg.hourglass;
  const std::size_t c1 = h.channels_at(1), k = cfg.rg_repetitions;
  std::size_t n = conv_count(3, c1, 5) + h.repetitions * unit_count(h, c1);
  n += conv_count(2, c1, 5) + unit_count(h, c1);
  for (std::size_t j = 1; j <= std::min<std::size_t>(4, h.levels - 1); ++j) {
    const std::size_t c = h.channels_at(j);
    n += k * (conv_count(2 * c, c, 3) + linear_count(c, c * c));
    n += (k - 1) * conv_count(c, c, 3);
    n += conv_count(k * c, c, 3) + linear_count(c, k * c);
  }
  return n + conv_count(c1, 1, 3);
}

data::Sample scene(std::uint64_t seed, std::size_t size = 32) {
  data::DatasetSpec spec;
  spec.height = spec.width = size;
  spec.seed = seed;
  return data::gen_scene(spec, 0);
}

std::uint64_t hash_of(const Tensor<float>& t) { return nn::fnv1a64(t.data(), t.size() * sizeof(float)); }

}  // namespace

TEST(RigNet, SameSeedSameParameters) {
  RigNet<float> a(RigNetConfig{}, 3), b(RigNetConfig{}, 3), c(RigNetConfig{}, 4);
  EXPECT_EQ(a.parameters().checksum(), b.parameters().checksum());
  EXPECT_NE(a.parameters().checksum(), c.parameters().checksum());
}

TEST(RigNet, DeskDefaultParameterCountMatchesClosedForm) {
  const RigNetConfig cfg;
  RigNet<float> net(cfg, 1);
  EXPECT_EQ(net.parameter_count(), rignet_count(cfg));
  RigNetConfig wide = cfg;
  wide.hourglass.levels = 5;
  wide.rg_repetitions = 3;
  RigNet<float> big(wide, 1);
  EXPECT_EQ(big.parameter_count(), rignet_count(wide));
}

TEST(RigNet, DegenerateConfigHasNoRepetitionMachinery) {
  RigNetConfig cfg;
  cfg.hourglass.repetitions = 1;
  cfg.rg_repetitions = 1;
  cfg.fusion = guidance::FusionMode::last;
  RigNet<float> net(cfg, 1);
  for (const auto& e : net.parameters().entries()) {
    EXPECT_EQ(e.name.find("refine"), std::string::npos) << e.name;
    EXPECT_EQ(e.name.find(".af."), std::string::npos) << e.name;
    EXPECT_EQ(e.name.find("rhn2"), std::string::npos) << e.name;
    EXPECT_EQ(e.name.find("rep2"), std::string::npos) << e.name;
  }
  EXPECT_EQ(net.color_branch().units().size(), 1u);
}

TEST(RigNet, OutputShapeAndFiniteness) {
  RigNet<float> net(RigNetConfig{}, 2);
  const data::Sample s = scene(2, 64);
  model::ForwardTrace<float> trace;
  const Var<float> out = net.forward(s.color, s.sparse, s.input_mask, &trace);
  EXPECT_EQ(out.dims(), (std::vector<std::size_t>{1, 64, 64}));
  EXPECT_TRUE(out.value().all_finite());
  EXPECT_EQ(trace.stages.size(), 2u);
  EXPECT_EQ(trace.guidance_states.size(), 2u);
}

TEST(RigNet, ZeroParametersWithoutBiasPredictZero) {
  RigNetConfig cfg;
  cfg.hourglass.use_bias = false;
  RigNet<float> net(cfg, 5);
  net.parameters().zero_values();
  const data::Sample s = scene(5);
  EXPECT_EQ(net.forward(s.color, s.sparse, s.input_mask).value(), Tensor<float>({1, 32, 32}));
}

TEST(RigNet, GoldenForwardHash) {
  RigNet<float> net(RigNetConfig{}, 42);
  const data::Sample s = scene(42);
  EXPECT_EQ(hash_of(net.forward(s.color, s.sparse, s.input_mask).value()), 0xf0abd1d2ab2db350ull);
}

TEST(RigNet, DeterministicAndFiniteOverManyInputs) {
  RigNet<float> net(RigNetConfig{}, 6);
  nn::Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<float> color({3, 32, 32}), sparse({1, 32, 32});
    std::vector<std::uint8_t> mask(32 * 32);
    for (float& v : color.storage()) v = static_cast<float>(rng.uniform01());
    for (std::size_t p = 0; p < mask.size(); ++p) {
      mask[p] = rng.bernoulli(0.05);
      if (mask[p]) sparse[p] = static_cast<float>(rng.uniform(0.5, 10.0));
    }
    const Tensor<float> a = net.forward(color, sparse, mask).value();
    ASSERT_TRUE(a.all_finite()) << trial;
    if (trial % 10 == 0) {
      ASSERT_EQ(a, net.forward(color, sparse, mask).value()) << trial;
    }
  }
}

TEST(RigNet, RejectsBadInputs) {
  RigNet<float> net(RigNetConfig{}, 7);
  data::Sample s = scene(7);
  EXPECT_THROW(net.forward(Tensor<float>({3, 30, 32}), Tensor<float>({1, 30, 32}),
                           std::vector<std::uint8_t>(30 * 32)),
               std::invalid_argument);
  EXPECT_THROW(net.forward(s.color, s.sparse, std::vector<std::uint8_t>(10)), std::invalid_argument);
  std::vector<std::uint8_t> none(32 * 32, 0);
  EXPECT_THROW(net.forward(s.color, s.sparse, none), std::invalid_argument);
}

TEST(MaskedMse, ExactMatchIsZero) {
  const Tensor<double> gt({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Var<double> p = Var<double>::constant(gt);
  EXPECT_EQ(model::masked_mse(p, gt, std::vector<std::uint8_t>{1, 1, 0, 1}).value()[0], 0.0);
}

TEST(MaskedMse, TwoPixelAnalytic) {
  const Tensor<double> gt({1, 1, 3}, std::vector<double>{2, 5, 7});
  const Var<double> p = Var<double>::constant(Tensor<double>({1, 1, 3}, std::vector<double>{3, 2, 100}));
  EXPECT_EQ(model::masked_mse(p, gt, std::vector<std::uint8_t>{1, 1, 0}).value()[0], 5.0);
}

TEST(MaskedMse, EmptyMaskIsAnError) {
  const Tensor<double> gt({1, 1, 2});
  EXPECT_THROW(model::masked_mse(Var<double>::constant(gt), gt, std::vector<std::uint8_t>{0, 0}),
               std::domain_error);
}

TEST(MaskedMse, InvalidPixelsDoNotReachLossOrGradient) {
  RigNet<double> net(RigNetConfig{}, 8);
  const data::Sample s = scene(8);
  const Tensor<double> color = s.color.cast<double>(), sparse = s.sparse.cast<double>();
  const Tensor<double> gt = s.gt.cast<double>();
  Var<double> pred = net.forward(color, sparse, s.input_mask);
  const Var<double> loss = model::masked_mse(pred, gt, s.gt_mask);
  nn::backward(loss);
  std::size_t invalid = 0;
  for (std::size_t p = 0; p < s.gt_mask.size(); ++p) {
    if (!s.gt_mask[p]) {
      ++invalid;
      EXPECT_EQ(pred.grad()[p], 0.0);
    }
  }
  ASSERT_GT(invalid, 0u);

  // Same value, and same gradients with respect to the prediction, after
  // moving every invalid pixel.
  Tensor<double> moved = pred.value();
  for (std::size_t p = 0; p < s.gt_mask.size(); ++p) {
    if (!s.gt_mask[p]) moved[p] += 123.0;
  }
  Var<double> a = Var<double>::leaf(pred.value()), b = Var<double>::leaf(moved);
  const Var<double> la = model::masked_mse(a, gt, s.gt_mask), lb = model::masked_mse(b, gt, s.gt_mask);
  EXPECT_EQ(la.value()[0], lb.value()[0]);
  nn::backward(la);
  nn::backward(lb);
  for (std::size_t p = 0; p < moved.size(); ++p) EXPECT_LT(std::fabs(a.grad()[p] - b.grad()[p]), 1e-12);
}

TEST(RigNet, SmallStepDescends) {
  trainer::TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RigNet<float> net(RigNetConfig{}, seed);
    const data::Sample s = scene(100 + seed);
    const std::vector<const data::Sample*> batch{&s};
    trainer::Adam<float> adam(net.parameters());
    Var<float> before = trainer::batch_loss(net, batch);
    nn::backward(before);
    ASSERT_TRUE(adam.step(net.parameters(), 1e-5, cfg));
    net.parameters().zero_grad();
    const double after = trainer::batch_loss(net, batch).value()[0];
    EXPECT_LT(after, before.value()[0]) << "seed " << seed;
  }
}

TEST(Checkpoint, RoundTripRestoresForwardBitwise) {
  RigNet<float> net(RigNetConfig{}, 9);
  const data::Sample s = scene(9);
  const Tensor<float> want = net.forward(s.color, s.sparse, s.input_mask).value();
  const std::string bytes = model::encode_checkpoint(model::snapshot(net));
  const model::Checkpoint ckpt = model::decode_checkpoint(bytes);
  EXPECT_EQ(model::encode_checkpoint(ckpt), bytes);
  RigNet<float> other(model::config_from_checkpoint(ckpt), 1234);
  model::restore_parameters(other, ckpt);
  EXPECT_EQ(other.forward(s.color, s.sparse, s.input_mask).value(), want);
}

TEST(Checkpoint, CorruptionIsDetected) {
  RigNet<float> net(RigNetConfig{}, 10);
  const std::string bytes = model::encode_checkpoint(model::snapshot(net));
  const auto kind_of = [](const std::string& b) {
    try {
      model::decode_checkpoint(b);
    } catch (const io::FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error";
    return io::FormatErrorKind::io;
  };
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_EQ(kind_of(flipped), io::FormatErrorKind::checksum_mismatch);
  std::string last = bytes;
  last.back() ^= 0x40;
  EXPECT_EQ(kind_of(last), io::FormatErrorKind::checksum_mismatch);
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() - 3)), io::FormatErrorKind::truncated);
  EXPECT_EQ(kind_of("RIGX" + bytes.substr(4)), io::FormatErrorKind::bad_magic);
}

TEST(Checkpoint, RestoreRejectsMismatchedShapes) {
  RigNet<float> small(RigNetConfig{}, 1);
  RigNetConfig wide;
  wide.hourglass.base_channels = 4;
  RigNet<float> other(wide, 1);
  EXPECT_THROW(model::restore_parameters(other, model::snapshot(small)), std::exception);
}

TEST(RigNetConfig, TextRoundTrip) {
  RigNetConfig cfg;
  cfg.rg_repetitions = 3;
  cfg.fusion = guidance::FusionMode::concat;
  cfg.fusion_levels = {1};
  kv::Reader reader(cfg.to_pairs());
  const RigNetConfig back = RigNetConfig::from_reader(reader);
  reader.require_all_used();
  EXPECT_EQ(kv::format(back.to_pairs()), kv::format(cfg.to_pairs()));
}
