#include "rig/guidance.hpp"

#include <array>

namespace rig::guidance {

namespace {

constexpr double kGeneratorGain = 0.01;

void check_pair(const std::vector<std::size_t>& img, const std::vector<std::size_t>& dep,
                std::size_t channels, const char* what) {
  if (img.size() != 3 || img != dep) {
    throw std::invalid_argument(std::string(what) + ": image and depth features differ in shape (" +
                                nn::shape_string(img) + " vs " + nn::shape_string(dep) + ")");
  }
  if (img[0] != channels) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(channels) +
                                " channels, got " + std::to_string(img[0]));
  }
}

// Generator bias that yields a one-hot centre tap on the (o == i) kernels.
template <class T>
void set_identity_taps(Var<T>& bias, std::size_t out_groups, std::size_t in_groups,
                       std::size_t window, bool diagonal_only) {
  if (!bias) return;
  const std::size_t rr = window * window, centre = rr / 2;
  nn::Tensor<T>& b = bias.mutable_value();
  b.fill(T(0));
  for (std::size_t o = 0; o < out_groups; ++o) {
    for (std::size_t i = 0; i < in_groups; ++i) {
      if (!diagonal_only || o == i) b[(o * in_groups + i) * rr + centre] = T(1);
    }
  }
}

template <class T>
void set_identity_matrix(Var<T>& bias, std::size_t channels) {
  if (!bias) return;
  nn::Tensor<T>& b = bias.mutable_value();
  b.fill(T(0));
  for (std::size_t c = 0; c < channels; ++c) b[c * channels + c] = T(1);
}

}  // namespace

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::last: return "last";
    case FusionMode::add: return "add";
    case FusionMode::concat: return "concat";
    case FusionMode::adaptive: return "adaptive";
  }
  return "?";
}

std::string to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::dynamic_conv: return "g1";
    case GuidanceKind::factorized: return "cf";
    case GuidanceKind::efficient: return "eg";
  }
  return "?";
}

FusionMode parse_fusion_mode(const std::string& text) {
  for (FusionMode m : {FusionMode::last, FusionMode::add, FusionMode::concat, FusionMode::adaptive}) {
    if (text == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown fusion mode '" + text + "'");
}

GuidanceKind parse_guidance_kind(const std::string& text) {
  for (GuidanceKind k :
       {GuidanceKind::dynamic_conv, GuidanceKind::factorized, GuidanceKind::efficient}) {
    if (text == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown guidance kind '" + text + "'");
}

template <class T>
DynamicConvG1<T>::DynamicConvG1(nn::ParameterSet<T>& params, const std::string& name,
                                std::size_t channels, const GuidanceOptions& opts)
    : generator(params, name + ".kernel_gen", channels,
                channels * channels * opts.window * opts.window, opts.generator_window, 1,
                opts.use_bias, kGeneratorGain),
      channels_(channels),
      opts_(opts) {
  set_identity_taps(generator.bias, channels, channels, opts.window, true);
}

template <class T>
Var<T> DynamicConvG1<T>::forward(const Var<T>& img, const Var<T>& dep, Footprint* tally) const {
  check_pair(img.dims(), dep.dims(), channels_, "dynamic_conv_g1");
  const auto& d = dep.dims();
  const std::size_t elements = channels_ * channels_ * opts_.window * opts_.window * d[1] * d[2];
  if (elements * sizeof(T) > opts_.dynamic_budget_bytes) {
    throw BudgetError("dynamic_conv_g1: generated kernels need " +
                      std::to_string(elements * sizeof(T)) + " bytes, budget is " +
                      std::to_string(opts_.dynamic_budget_bytes));
  }
  Var<T> kernels = generator(img);
  if (tally != nullptr) tally->kernel_elements += kernels.value().size();
  return nn::dynamic_conv(dep, kernels, opts_.window);
}

template <class T>
ConvFactorizedCF<T>::ConvFactorizedCF(nn::ParameterSet<T>& params, const std::string& name,
                                      std::size_t channels, const GuidanceOptions& opts)
    : depthwise_generator(params, name + ".depthwise_gen", channels,
                          channels * opts.window * opts.window, opts.generator_window, 1,
                          opts.use_bias, kGeneratorGain),
      mix_generator(params, name + ".mix_gen", channels, channels * channels, opts.use_bias,
                    kGeneratorGain),
      channels_(channels),
      opts_(opts) {
  set_identity_taps(depthwise_generator.bias, channels, 1, opts.window, false);
  set_identity_matrix(mix_generator.bias, channels);
}

template <class T>
Var<T> ConvFactorizedCF<T>::forward(const Var<T>& img, const Var<T>& dep, Footprint* tally) const {
  check_pair(img.dims(), dep.dims(), channels_, "conv_factorized_cf");
  Var<T> kernels = depthwise_generator(img);
  Var<T> filtered = nn::depthwise_dynamic_conv(dep, kernels, opts_.window);
  Var<T> mix = mix_generator(nn::global_avg_pool(img));
  if (tally != nullptr) {
    tally->kernel_elements += kernels.value().size();
    tally->mix_elements += mix.value().size();
  }
  return nn::channel_mix(filtered, mix);
}

template <class T>
EfficientGuidance<T>::EfficientGuidance(nn::ParameterSet<T>& params, const std::string& name,
                                        std::size_t channels, const GuidanceOptions& opts)
    : gate_conv(params, name + ".gate_conv", 2 * channels, channels, 3, 1, opts.use_bias,
                kGeneratorGain),
      mix_generator(params, name + ".mix_gen", channels, channels * channels, opts.use_bias,
                    kGeneratorGain),
      channels_(channels) {
  if (gate_conv.bias) gate_conv.bias.mutable_value().fill(T(1));
  set_identity_matrix(mix_generator.bias, channels);
}

template <class T>
Var<T> EfficientGuidance<T>::forward(const Var<T>& img, const Var<T>& dep, Footprint* tally) const {
  check_pair(img.dims(), dep.dims(), channels_, "eg_unit");
  const std::array<Var<T>, 2> pair{img, dep};
  Var<T> gate = nn::global_avg_pool(gate_conv(nn::concat_channels<T>(pair)));
  Var<T> gated = nn::scale_channels(dep, gate);
  Var<T> mix = mix_generator(nn::global_avg_pool(img));
  if (tally != nullptr) {
    tally->kernel_elements += gated.value().size();
    tally->mix_elements += mix.value().size();
  }
  return nn::channel_mix(gated, mix);
}

template <class T>
std::unique_ptr<GuidanceUnit<T>> make_guidance_unit(GuidanceKind kind, nn::ParameterSet<T>& params,
                                                    const std::string& name, std::size_t channels,
                                                    const GuidanceOptions& opts) {
  switch (kind) {
    case GuidanceKind::dynamic_conv:
      return std::make_unique<DynamicConvG1<T>>(params, name + ".g1", channels, opts);
    case GuidanceKind::factorized:
      return std::make_unique<ConvFactorizedCF<T>>(params, name + ".cf", channels, opts);
    case GuidanceKind::efficient:
      return std::make_unique<EfficientGuidance<T>>(params, name + ".eg", channels, opts);
  }
  throw std::invalid_argument("make_guidance_unit: unknown kind");
}

template <class T>
AdaptiveFusion<T>::AdaptiveFusion(nn::ParameterSet<T>& params, const std::string& name,
                                  std::size_t channels, std::size_t branches, bool use_bias)
    : squeeze(params, name + ".squeeze", branches * channels, channels, 3, 1, use_bias),
      logits(params, name + ".logits", channels, branches * channels, use_bias, kGeneratorGain),
      channels_(channels),
      branches_(branches) {
  if (branches == 0) throw std::invalid_argument("adaptive_fusion: need at least one branch");
}

template <class T>
Var<T> AdaptiveFusion<T>::forward(const std::vector<Var<T>>& branches, Var<T>* weights_out) const {
  if (branches.empty()) throw std::invalid_argument("adaptive_fusion: empty branch list");
  if (branches.size() != branches_) {
    throw std::invalid_argument("adaptive_fusion: expected " + std::to_string(branches_) +
                                " branches, got " + std::to_string(branches.size()));
  }
  for (const auto& b : branches) {
    if (b.dims() != branches[0].dims()) {
      throw std::invalid_argument("adaptive_fusion: branch shapes differ");
    }
  }
  if (branches[0].dims().size() != 3 || branches[0].dims()[0] != channels_) {
    throw std::invalid_argument("adaptive_fusion: branch channel count mismatch");
  }
  Var<T> pooled = nn::global_avg_pool(squeeze(nn::concat_channels<T>(branches)));
  Var<T> alpha = nn::softmax_branches(nn::reshape(logits(pooled), {branches_, channels_}));
  if (weights_out != nullptr) *weights_out = alpha;
  return nn::weighted_sum<T>(branches, alpha);
}

template <class T>
RepetitiveGuidance<T>::RepetitiveGuidance(nn::ParameterSet<T>& params, const std::string& name,
                                          std::size_t channels, std::size_t repetitions,
                                          GuidanceKind kind, FusionMode mode,
                                          const GuidanceOptions& opts)
    : channels_(channels), mode_(mode) {
  if (repetitions == 0) throw std::invalid_argument("rg_forward: repetitions must be >= 1");
  for (std::size_t n = 1; n <= repetitions; ++n) {
    const std::string rep = name + ".rep" + std::to_string(n);
    units_.push_back(make_guidance_unit<T>(kind, params, rep, channels, opts));
    if (n > 1) refine_.emplace_back(params, rep + ".refine", channels, channels, 3, 1, opts.use_bias);
  }
  switch (mode) {
    case FusionMode::last:
    case FusionMode::add:
      break;
    case FusionMode::concat:
      concat_.emplace(params, name + ".concat", repetitions * channels, channels, 1, 1,
                      opts.use_bias);
      break;
    case FusionMode::adaptive:
      fusion_.emplace(params, name + ".af", channels, repetitions, opts.use_bias);
      break;
    default:
      throw std::invalid_argument("rg_forward: invalid fusion mode");
  }
}

template <class T>
Var<T> RepetitiveGuidance<T>::forward(const Var<T>& img, const Var<T>& dep,
                                      GuidanceStage<T>* trace, Footprint* tally) const {
  std::vector<Var<T>> branches;
  branches.reserve(units_.size());
  branches.push_back(units_[0]->forward(img, dep, tally));
  for (std::size_t n = 1; n < units_.size(); ++n) {
    Var<T> refined = nn::relu(refine_[n - 1](img));
    branches.push_back(units_[n]->forward(refined, branches.back(), tally));
  }

  Var<T> fused;
  switch (mode_) {
    case FusionMode::last:
      fused = branches.back();
      break;
    case FusionMode::add:
      fused = nn::add_all<T>(branches);
      break;
    case FusionMode::concat:
      fused = (*concat_)(nn::concat_channels<T>(branches));
      break;
    case FusionMode::adaptive:
      fused = fusion_->forward(branches);
      break;
  }
  if (trace != nullptr) {
    trace->image_feature = img;
    trace->depth_feature = dep;
    trace->branches = branches;
    trace->fused = fused;
    trace->repetitions = units_.size();
  }
  return fused;
}

template class DynamicConvG1<float>;
template class DynamicConvG1<double>;
template class ConvFactorizedCF<float>;
template class ConvFactorizedCF<double>;
template class EfficientGuidance<float>;
template class EfficientGuidance<double>;
template class AdaptiveFusion<float>;
template class AdaptiveFusion<double>;
template class RepetitiveGuidance<float>;
template class RepetitiveGuidance<double>;
template std::unique_ptr<GuidanceUnit<float>> make_guidance_unit(GuidanceKind,
                                                                 nn::ParameterSet<float>&,
                                                                 const std::string&, std::size_t,
                                                                 const GuidanceOptions&);
template std::unique_ptr<GuidanceUnit<double>> make_guidance_unit(GuidanceKind,
                                                                  nn::ParameterSet<double>&,
                                                                  const std::string&, std::size_t,
                                                                  const GuidanceOptions&);

}  // namespace rig::guidance
