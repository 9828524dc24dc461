#include "rig/gradsuite.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "rig/guidance.hpp"
#include "rig/hourglass.hpp"
#include "rig/nn/random.hpp"

namespace rig::gradsuite {

using nn::Rng;
using nn::Tensor;
using nn::Var;
using D = double;

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Var<D> random_leaf(Rng& rng, std::vector<std::size_t> dims, double lo = -1.0, double hi = 1.0) {
  Tensor<D> t(std::move(dims));
  for (D& v : t.storage()) v = rng.uniform(lo, hi);
  return Var<D>::leaf(std::move(t));
}

// Replaces constructor-time values so that every parameter, including
// biases initialised to constants, is exercised at a generic point.
void randomize(nn::ParameterSet<D>& params, Rng& rng, double scale) {
  for (auto& e : params.entries()) {
    for (D& v : e.var.mutable_value().storage()) v = rng.uniform(-scale, scale);
  }
}

std::vector<Var<D>> leaves_of(const nn::ParameterSet<D>& params, std::vector<Var<D>> extra) {
  for (const auto& e : params.entries()) extra.push_back(e.var);
  return extra;
}

struct Case {
  std::function<Var<D>()> forward;
  std::vector<Var<D>> leaves;
  std::shared_ptr<void> keep_alive;  // owns modules referenced by `forward`
};

using Builder = std::function<Case(Rng&, std::uint64_t)>;

guidance::GuidanceOptions small_options() {
  guidance::GuidanceOptions o;
  o.window = 3;
  return o;
}

const std::vector<std::pair<std::string, Builder>>& registry() {
  static const std::vector<std::pair<std::string, Builder>> cases = {
      {"conv2d",
       [](Rng& rng, std::uint64_t) {
         const std::size_t ci = pick(rng, 1, 4), co = pick(rng, 1, 4), h = pick(rng, 4, 8),
                           w = pick(rng, 4, 8), r = rng.bernoulli(0.5) ? 3 : 1,
                           stride = pick(rng, 1, 2);
         Var<D> x = random_leaf(rng, {ci, h, w});
         Var<D> k = random_leaf(rng, {co, ci, r, r});
         Var<D> b = random_leaf(rng, {co});
         const nn::ConvGeometry g{stride, (r - 1) / 2};
         return Case{[=] { return nn::conv2d(x, k, b, g); }, {x, k, b}, nullptr};
       }},
      {"deconv2d",
       [](Rng& rng, std::uint64_t) {
         const std::size_t ci = pick(rng, 1, 4), co = pick(rng, 1, 4), h = pick(rng, 2, 4),
                           w = pick(rng, 2, 4);
         Var<D> x = random_leaf(rng, {ci, h, w});
         Var<D> k = random_leaf(rng, {ci, co, 3, 3});
         Var<D> b = random_leaf(rng, {co});
         return Case{[=] { return nn::deconv2d(x, k, b, nn::DeconvGeometry{2, 1, 1}); },
                     {x, k, b},
                     nullptr};
       }},
      {"global_avg_pool",
       [](Rng& rng, std::uint64_t) {
         Var<D> x = random_leaf(rng, {pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)});
         return Case{[=] { return nn::global_avg_pool(x); }, {x}, nullptr};
       }},
      {"softmax_branches",
       [](Rng& rng, std::uint64_t) {
         Var<D> x = random_leaf(rng, {pick(rng, 1, 4), pick(rng, 1, 4)}, -2.0, 2.0);
         return Case{[=] { return nn::softmax_branches(x); }, {x}, nullptr};
       }},
      {"eg_unit",
       [](Rng& rng, std::uint64_t seed) {
         const std::size_t c = pick(rng, 1, 4), h = pick(rng, 2, 8), w = pick(rng, 2, 8);
         auto params = std::make_shared<nn::ParameterSet<D>>(seed);
         auto unit = std::make_shared<guidance::EfficientGuidance<D>>(*params, "eg", c,
                                                                      small_options());
         randomize(*params, rng, 0.5);
         Var<D> img = random_leaf(rng, {c, h, w}), dep = random_leaf(rng, {c, h, w});
         auto hold = std::make_shared<std::pair<decltype(params), decltype(unit)>>(params, unit);
         return Case{[=] { return unit->forward(img, dep); }, leaves_of(*params, {img, dep}), hold};
       }},
      {"dynamic_conv_g1",
       [](Rng& rng, std::uint64_t seed) {
         const std::size_t c = pick(rng, 1, 3), h = pick(rng, 2, 8), w = pick(rng, 2, 8);
         auto params = std::make_shared<nn::ParameterSet<D>>(seed);
         auto unit =
             std::make_shared<guidance::DynamicConvG1<D>>(*params, "g1", c, small_options());
         randomize(*params, rng, 0.5);
         Var<D> img = random_leaf(rng, {c, h, w}), dep = random_leaf(rng, {c, h, w});
         auto hold = std::make_shared<std::pair<decltype(params), decltype(unit)>>(params, unit);
         return Case{[=] { return unit->forward(img, dep); }, leaves_of(*params, {img, dep}), hold};
       }},
      {"conv_factorized_cf",
       [](Rng& rng, std::uint64_t seed) {
         const std::size_t c = pick(rng, 1, 4), h = pick(rng, 2, 8), w = pick(rng, 2, 8);
         auto params = std::make_shared<nn::ParameterSet<D>>(seed);
         auto unit =
             std::make_shared<guidance::ConvFactorizedCF<D>>(*params, "cf", c, small_options());
         randomize(*params, rng, 0.5);
         Var<D> img = random_leaf(rng, {c, h, w}), dep = random_leaf(rng, {c, h, w});
         auto hold = std::make_shared<std::pair<decltype(params), decltype(unit)>>(params, unit);
         return Case{[=] { return unit->forward(img, dep); }, leaves_of(*params, {img, dep}), hold};
       }},
      {"adaptive_fusion",
       [](Rng& rng, std::uint64_t seed) {
         const std::size_t k = pick(rng, 1, 3), c = pick(rng, 1, 4), h = pick(rng, 2, 8),
                           w = pick(rng, 2, 8);
         auto params = std::make_shared<nn::ParameterSet<D>>(seed);
         auto af = std::make_shared<guidance::AdaptiveFusion<D>>(*params, "af", c, k, true);
         randomize(*params, rng, 0.5);
         std::vector<Var<D>> branches;
         for (std::size_t n = 0; n < k; ++n) branches.push_back(random_leaf(rng, {c, h, w}));
         auto hold = std::make_shared<std::pair<decltype(params), decltype(af)>>(params, af);
         return Case{[=] { return af->forward(branches); }, leaves_of(*params, branches), hold};
       }},
      {"rg_forward",
       [](Rng& rng, std::uint64_t seed) {
         const std::size_t c = pick(rng, 1, 3), h = pick(rng, 2, 6), w = pick(rng, 2, 6);
         const auto mode = static_cast<guidance::FusionMode>(seed % 4);
         auto params = std::make_shared<nn::ParameterSet<D>>(seed);
         auto rg = std::make_shared<guidance::RepetitiveGuidance<D>>(
             *params, "rg", c, 2, guidance::GuidanceKind::efficient, mode, small_options());
         randomize(*params, rng, 0.5);
         Var<D> img = random_leaf(rng, {c, h, w}), dep = random_leaf(rng, {c, h, w});
         auto hold = std::make_shared<std::pair<decltype(params), decltype(rg)>>(params, rg);
         return Case{[=] { return rg->forward(img, dep); }, leaves_of(*params, {img, dep}), hold};
       }},
      {"rhn_unit",
       [](Rng& rng, std::uint64_t seed) {
         hourglass::HourglassConfig cfg;
         cfg.levels = pick(rng, 2, 3);
         cfg.base_channels = pick(rng, 1, 2);
         cfg.channel_cap = 4;
         cfg.repetitions = 1 + seed % 2;  // odd seeds also cover the cross-unit skips
         const std::size_t ci = pick(rng, 1, 3), side = cfg.levels == 2 ? 4 : 8;
         auto params = std::make_shared<nn::ParameterSet<D>>(seed);
         auto stack = std::make_shared<hourglass::RhnStack<D>>(*params, "rhn", cfg, ci);
         randomize(*params, rng, 0.5);
         Var<D> x = random_leaf(rng, {ci, side, side});
         auto hold = std::make_shared<std::pair<decltype(params), decltype(stack)>>(params, stack);
         return Case{[=] { return stack->forward(x).decoder[0]; }, leaves_of(*params, {x}), hold};
       }},
      {"masked_mse",
       [](Rng& rng, std::uint64_t) {
         const std::size_t h = pick(rng, 2, 8), w = pick(rng, 2, 8);
         Var<D> pred = random_leaf(rng, {1, h, w}, 0.0, 5.0);
         Tensor<D> gt({1, h, w});
         for (D& v : gt.storage()) v = rng.uniform(0.0, 5.0);
         auto mask = std::make_shared<std::vector<std::uint8_t>>(h * w);
         for (auto& m : *mask) m = rng.bernoulli(0.5) ? 1 : 0;
         (*mask)[0] = 1;
         return Case{[=] { return nn::masked_mse<D>(pred, gt, *mask); }, {pred}, mask};
       }},
      {"linear",
       [](Rng& rng, std::uint64_t) {
         const std::size_t n = pick(rng, 1, 4), m = pick(rng, 1, 8);
         Var<D> v = random_leaf(rng, {n, 1, 1}), W = random_leaf(rng, {m, n}), b = random_leaf(rng, {m});
         return Case{[=] { return nn::linear(v, W, b); }, {v, W, b}, nullptr};
       }},
      {"channel_mix",
       [](Rng& rng, std::uint64_t) {
         const std::size_t c = pick(rng, 1, 4);
         Var<D> x = random_leaf(rng, {c, pick(rng, 1, 8), pick(rng, 1, 8)});
         Var<D> m = random_leaf(rng, {c * c, 1, 1});
         return Case{[=] { return nn::channel_mix(x, m); }, {x, m}, nullptr};
       }},
      {"scale_channels",
       [](Rng& rng, std::uint64_t) {
         const std::size_t c = pick(rng, 1, 4);
         Var<D> x = random_leaf(rng, {c, pick(rng, 1, 8), pick(rng, 1, 8)});
         Var<D> g = random_leaf(rng, {c, 1, 1});
         return Case{[=] { return nn::scale_channels(x, g); }, {x, g}, nullptr};
       }},
      {"weighted_sum",
       [](Rng& rng, std::uint64_t) {
         const std::size_t k = pick(rng, 1, 4), c = pick(rng, 1, 4), h = pick(rng, 1, 8),
                           w = pick(rng, 1, 8);
         std::vector<Var<D>> br;
         for (std::size_t n = 0; n < k; ++n) br.push_back(random_leaf(rng, {c, h, w}));
         Var<D> a = random_leaf(rng, {k, c});
         std::vector<Var<D>> all = br;
         all.push_back(a);
         return Case{[=] { return nn::weighted_sum<D>(br, a); }, all, nullptr};
       }},
      {"concat_channels",
       [](Rng& rng, std::uint64_t) {
         const std::size_t h = pick(rng, 1, 8), w = pick(rng, 1, 8);
         std::vector<Var<D>> parts;
         for (std::size_t n = pick(rng, 1, 3); n > 0; --n) {
           parts.push_back(random_leaf(rng, {pick(rng, 1, 2), h, w}));
         }
         return Case{[=] { return nn::concat_channels<D>(parts); }, parts, nullptr};
       }},
      {"relu",
       [](Rng& rng, std::uint64_t) {
         Var<D> x = random_leaf(rng, {pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)});
         return Case{[=] { return nn::relu(x); }, {x}, nullptr};
       }},
      {"dynamic_conv",
       [](Rng& rng, std::uint64_t) {
         const std::size_t c = pick(rng, 1, 3), h = pick(rng, 2, 6), w = pick(rng, 2, 6);
         Var<D> x = random_leaf(rng, {c, h, w}), k = random_leaf(rng, {c * c * 9, h, w});
         return Case{[=] { return nn::dynamic_conv(x, k, 3); }, {x, k}, nullptr};
       }},
      {"depthwise_dynamic_conv",
       [](Rng& rng, std::uint64_t) {
         const std::size_t c = pick(rng, 1, 4), h = pick(rng, 2, 8), w = pick(rng, 2, 8);
         Var<D> x = random_leaf(rng, {c, h, w}), k = random_leaf(rng, {c * 9, h, w});
         return Case{[=] { return nn::depthwise_dynamic_conv(x, k, 3); }, {x, k}, nullptr};
       }},
  };
  return cases;
}

}  // namespace

std::vector<std::string> operations() {
  std::vector<std::string> out;
  for (const auto& [name, builder] : registry()) out.push_back(name);
  return out;
}

std::vector<nn::GradReport> run(const Options& opts) {
  std::vector<nn::GradReport> reports;
  for (const auto& [name, builder] : registry()) {
    if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), name) == opts.only.end()) {
      continue;
    }
    for (std::uint64_t seed : opts.seeds) {
      Rng rng(nn::derive_seed(seed, name));
      Case c = builder(rng, seed);
      nn::GradReport r = nn::check_gradients(name + "[seed=" + std::to_string(seed) + "]",
                                             c.forward, c.leaves, opts.eps,
                                             nn::derive_seed(seed, 0x9ad));
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

}  // namespace rig::gradsuite
