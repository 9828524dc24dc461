#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rig/guidance.hpp"
#include "rig/hourglass.hpp"
#include "rig/keyvalue.hpp"

namespace rig::model {

using nn::Tensor;
using nn::Var;

struct RigNetConfig {
  hourglass::HourglassConfig hourglass{3, 8, 2, 1, 64, true};
  std::size_t rg_repetitions = 2;  // k
  guidance::FusionMode fusion = guidance::FusionMode::adaptive;
  guidance::GuidanceKind guidance = guidance::GuidanceKind::efficient;
  /// 1-based encoder levels hosting a guidance stage; empty selects 1..min(4, J-1).
  std::vector<std::size_t> fusion_levels;
  std::size_t stem_window = 5;
  guidance::GuidanceOptions guidance_options;

  std::vector<std::size_t> resolved_fusion_levels() const;
  void validate() const;

  /// Keys are prefixed with "model.".
  kv::Pairs to_pairs() const;
  /// Consumes the "model." keys it knows; others are left for the caller.
  static RigNetConfig from_reader(kv::Reader& reader);
};

/// Everything a forward pass produced besides the prediction.
template <class T>
struct ForwardTrace {
  std::vector<hourglass::HourglassState<T>> guidance_states;  // one per color-branch unit
  hourglass::HourglassState<T> depth_state;
  std::vector<guidance::GuidanceStage<T>> stages;  // one per fusion level, ascending
  guidance::Footprint footprint;
};

/// Color branch: 5x5 stem then stacked hourglass units. Depth branch: 5x5
/// stem over (sparse depth, validity mask) then one hourglass unit whose
/// encoder runs repetitive guidance at the fusion levels against the last
/// color unit's decoder features. A 3x3 head maps the depth decoder to meters.
template <class T>
class RigNet {
 public:
  RigNet(const RigNetConfig& cfg, std::uint64_t seed);
  RigNet(const RigNet&) = delete;
  RigNet& operator=(const RigNet&) = delete;

  /// color: 3 x H x W, sparse: 1 x H x W, mask: H*W flags (nonzero = measured).
  Var<T> forward(const Tensor<T>& color, const Tensor<T>& sparse,
                 std::span<const std::uint8_t> mask, ForwardTrace<T>* trace = nullptr) const;

  nn::ParameterSet<T>& parameters() noexcept { return params_; }
  const nn::ParameterSet<T>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.element_count(); }
  const RigNetConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return params_.seed(); }

  const hourglass::RhnStack<T>& color_branch() const noexcept { return color_rhn_; }
  const hourglass::RhnUnit<T>& depth_branch() const noexcept { return depth_rhn_; }

 private:
  RigNetConfig cfg_;
  nn::ParameterSet<T> params_;
  std::vector<std::size_t> levels_;
  nn::Conv2d<T> color_stem_;
  hourglass::RhnStack<T> color_rhn_;
  nn::Conv2d<T> depth_stem_;
  hourglass::RhnUnit<T> depth_rhn_;
  std::vector<guidance::RepetitiveGuidance<T>> stages_;  // parallel to levels_
  nn::Conv2d<T> head_;
};

/// (1/m) sum over valid pixels of (gt - pred)^2 with m the valid count.
/// Throws std::domain_error when m == 0.
template <class T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& gt, std::span<const std::uint8_t> valid) {
  return nn::masked_mse(pred, gt, valid);
}

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// "RIG1", config text, then named little-endian f32 tensors and a trailing
/// FNV-1a checksum of everything before it.
struct Checkpoint {
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws io::FormatError (bad magic, truncation, checksum mismatch, malformed).
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters in declaration order, with the model config as the text.
Checkpoint snapshot(const RigNet<float>& net);
/// Copies parameter values by name; throws on missing names or shape mismatch.
void restore_parameters(RigNet<float>& net, const Checkpoint& ckpt);
/// Rebuilds a network from a checkpoint's config and parameters.
RigNetConfig config_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rig::model
