#include "rig/hourglass.hpp"

#include <algorithm>
#include <stdexcept>

namespace rig::hourglass {

std::size_t HourglassConfig::channels_at(std::size_t level) const {
  std::size_t c = base_channels;
  for (std::size_t j = 1; j < level && c < channel_cap; ++j) c *= 2;
  return std::min(c, channel_cap);
}

void HourglassConfig::validate() const {
  if (levels < 2) throw std::invalid_argument("hourglass: need at least 2 levels");
  if (base_channels == 0) throw std::invalid_argument("hourglass: base_channels must be positive");
  if (repetitions == 0) throw std::invalid_argument("hourglass: repetitions must be >= 1");
  if (encoder_depth == 0) throw std::invalid_argument("hourglass: encoder_depth must be >= 1");
  if (channel_cap < base_channels) throw std::invalid_argument("hourglass: cap below base width");
}

void HourglassConfig::validate_input(std::size_t height, std::size_t width) const {
  const std::size_t factor = std::size_t{1} << (levels - 1);
  if (height == 0 || width == 0 || height % factor != 0 || width % factor != 0) {
    throw std::invalid_argument("hourglass: input " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by " +
                                std::to_string(factor));
  }
}

template <class T>
ResidualBlock<T>::ResidualBlock(nn::ParameterSet<T>& params, const std::string& name,
                                std::size_t channels, bool bias)
    : first_(params, name + ".conv1", channels, channels, 3, 1, bias),
      // Scaled-down second conv keeps the identity path dominant at init.
      second_(params, name + ".conv2", channels, channels, 3, 1, bias, 0.5) {}

template <class T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x, const Var<T>& extra) const {
  Var<T> sum = nn::add(second_(nn::relu(first_(x))), x);
  if (extra) sum = nn::add(sum, extra);
  return nn::relu(sum);
}

template <class T>
RhnUnit<T>::RhnUnit(nn::ParameterSet<T>& params, const std::string& prefix,
                    const HourglassConfig& cfg, std::size_t input_channels)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t before = params.element_count();
  std::size_t in = input_channels;
  for (std::size_t j = 1; j <= cfg_.levels; ++j) {
    const std::size_t c = cfg_.channels_at(j);
    const std::string name = prefix + ".enc" + std::to_string(j);
    Level level;
    level.entry = nn::Conv2d<T>(params, name + ".entry", in, c, 3, j == 1 ? 1 : 2, cfg_.use_bias);
    for (std::size_t b = 0; b < cfg_.encoder_depth; ++b) {
      level.blocks.emplace_back(params, name + ".block" + std::to_string(b + 1), c,
                                cfg_.use_bias);
    }
    levels_.push_back(std::move(level));
    in = c;
  }
  bottleneck_ = nn::Conv2d<T>(params, prefix + ".dec" + std::to_string(cfg_.levels), in, in, 3, 1,
                              cfg_.use_bias);
  for (std::size_t j = 1; j < cfg_.levels; ++j) {
    up_.emplace_back(params, prefix + ".up" + std::to_string(j), cfg_.channels_at(j + 1),
                     cfg_.channels_at(j), cfg_.use_bias, 0.5);
  }
  parameter_count_ = params.element_count() - before;
}

template <class T>
HourglassState<T> RhnUnit<T>::forward(const Var<T>& input, const HourglassState<T>* prev,
                                      const EncoderHook<T>& hook) const {
  const auto& dims = input.value().dims();
  if (dims.size() != 3) throw std::invalid_argument("rhn_unit: input must be C x H x W");
  cfg_.validate_input(dims[1], dims[2]);
  const std::size_t J = cfg_.levels;
  if (prev != nullptr) {
    if (prev->decoder.size() != J) throw std::invalid_argument("rhn_unit: previous state depth");
    if (prev->decoder[0].dims() != std::vector<std::size_t>{cfg_.channels_at(1), dims[1], dims[2]}) {
      throw std::invalid_argument("rhn_unit: previous decoder shape does not match input");
    }
  }

  HourglassState<T> state;
  state.encoder.resize(J);
  state.decoder.resize(J);
  Var<T> x = input;
  for (std::size_t j = 0; j < J; ++j) {
    const Level& level = levels_[j];
    x = nn::relu(level.entry(x));
    Var<T> extra;
    if (prev != nullptr && j > 0) extra = prev->decoder[j];
    for (std::size_t b = 0; b < level.blocks.size(); ++b) {
      const bool last = b + 1 == level.blocks.size();
      x = level.blocks[b](x, last ? extra : Var<T>{});
    }
    if (hook) x = hook(j + 1, x);
    state.encoder[j] = x;
  }

  state.decoder[J - 1] = nn::relu(bottleneck_(state.encoder[J - 1]));
  for (std::size_t j = J - 1; j-- > 0;) {
    state.decoder[j] = nn::relu(nn::add(up_[j](state.decoder[j + 1]), state.encoder[j]));
  }
  return state;
}

template <class T>
RhnStack<T>::RhnStack(nn::ParameterSet<T>& params, const std::string& prefix,
                      const HourglassConfig& cfg, std::size_t input_channels) {
  cfg.validate();
  for (std::size_t i = 1; i <= cfg.repetitions; ++i) {
    units_.emplace_back(params, prefix + ".rhn" + std::to_string(i), cfg,
                        i == 1 ? input_channels : cfg.channels_at(1));
  }
}

template <class T>
std::vector<HourglassState<T>> RhnStack<T>::forward_all(const Var<T>& image_feature) const {
  std::vector<HourglassState<T>> states;
  states.reserve(units_.size());
  for (const auto& unit : units_) {
    if (states.empty()) {
      states.push_back(unit.forward(image_feature, nullptr));
    } else {
      const HourglassState<T>& prev = states.back();
      states.push_back(unit.forward(prev.decoder[0], &prev));
    }
  }
  return states;
}

template <class T>
HourglassState<T> RhnStack<T>::forward(const Var<T>& image_feature) const {
  return forward_all(image_feature).back();
}

template <class T>
std::size_t RhnStack<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& u : units_) n += u.parameter_count();
  return n;
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class RhnUnit<float>;
template class RhnUnit<double>;
template class RhnStack<float>;
template class RhnStack<double>;

}  // namespace rig::hourglass
