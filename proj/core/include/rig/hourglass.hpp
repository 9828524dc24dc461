#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rig/nn/layers.hpp"

namespace rig::hourglass {

using nn::Var;

struct HourglassConfig {
  std::size_t levels = 3;          // J
  std::size_t base_channels = 8;
  std::size_t repetitions = 1;     // number of stacked units
  std::size_t encoder_depth = 1;   // residual blocks per level
  std::size_t channel_cap = 64;
  bool use_bias = true;

  /// Width of 1-based level j: base * 2^(j-1), capped.
  std::size_t channels_at(std::size_t level) const;
  void validate() const;
  /// Throws unless height and width are divisible by 2^(J-1).
  void validate_input(std::size_t height, std::size_t width) const;
};

/// Encoder and decoder activations of one unit, index 0 holding level 1.
template <class T>
struct HourglassState {
  std::vector<Var<T>> encoder;
  std::vector<Var<T>> decoder;
};

/// Optional rewrite of each encoder output before it feeds the next level and
/// the decoder skip. Receives the 1-based level.
template <class T>
using EncoderHook = std::function<Var<T>(std::size_t level, const Var<T>& encoded)>;

template <class T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(nn::ParameterSet<T>& params, const std::string& name, std::size_t channels,
                bool bias);

  /// relu(conv_b(relu(conv_a(x))) + x [+ extra])
  Var<T> operator()(const Var<T>& x, const Var<T>& extra = {}) const;

 private:
  nn::Conv2d<T> first_;
  nn::Conv2d<T> second_;
};

/// One encoder-decoder unit. Level 1 keeps the input resolution; level j
/// downsamples with a stride-2 convolution, then runs residual blocks. The
/// decoder upsamples with transposed convolutions and adds the same-level
/// encoder feature.
template <class T>
class RhnUnit {
 public:
  RhnUnit(nn::ParameterSet<T>& params, const std::string& prefix, const HourglassConfig& cfg,
          std::size_t input_channels);

  /// With `prev`, encoder levels j > 1 also add the previous unit's decoder
  /// feature at level j. The caller passes prev->decoder[0] as `input` when
  /// chaining units.
  HourglassState<T> forward(const Var<T>& input, const HourglassState<T>* prev,
                            const EncoderHook<T>& hook = {}) const;

  std::size_t parameter_count() const { return parameter_count_; }
  const HourglassConfig& config() const noexcept { return cfg_; }

 private:
  struct Level {
    nn::Conv2d<T> entry;
    std::vector<ResidualBlock<T>> blocks;
  };

  HourglassConfig cfg_;
  std::vector<Level> levels_;
  nn::Conv2d<T> bottleneck_;
  std::vector<nn::Deconv2d<T>> up_;  // up_[j] maps level j+2 to level j+1 (1-based)
  std::size_t parameter_count_ = 0;
};

/// `repetitions` units with independent weights, each fed by its predecessor's
/// decoder state.
template <class T>
class RhnStack {
 public:
  RhnStack(nn::ParameterSet<T>& params, const std::string& prefix, const HourglassConfig& cfg,
           std::size_t input_channels);

  /// Returns the final unit's state.
  HourglassState<T> forward(const Var<T>& image_feature) const;
  /// All unit states, first to last.
  std::vector<HourglassState<T>> forward_all(const Var<T>& image_feature) const;

  std::size_t parameter_count() const;
  const std::vector<RhnUnit<T>>& units() const noexcept { return units_; }

 private:
  std::vector<RhnUnit<T>> units_;
};

}  // namespace rig::hourglass
