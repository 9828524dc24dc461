#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rig/nn/layers.hpp"

// Image-guided filtering of depth features: the dense dynamic convolution
// baseline, its channel-wise/cross-channel factorization, the pooled-gate
// efficient guidance unit, and the repetitive module chaining any of them
// with a configurable fusion head.
namespace rig::guidance {

using nn::Var;

enum class FusionMode { last, add, concat, adaptive };
enum class GuidanceKind { dynamic_conv, factorized, efficient };

std::string to_string(FusionMode mode);
std::string to_string(GuidanceKind kind);
FusionMode parse_fusion_mode(const std::string& text);
GuidanceKind parse_guidance_kind(const std::string& text);

/// Raised when a dense dynamic convolution would exceed its activation budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GuidanceOptions {
  std::size_t window = 3;            // R, filter window of generated kernels
  std::size_t generator_window = 1;  // spatial extent of kernel-generating convs
  bool use_bias = true;
  std::size_t dynamic_budget_bytes = std::size_t{1} << 30;
};

/// Element counts of the guidance-specific intermediates produced by a
/// forward pass: generated per-pixel kernels (or the gated map for EG) and
/// generated cross-channel mixing matrices.
struct Footprint {
  std::size_t kernel_elements = 0;
  std::size_t mix_elements = 0;
  std::size_t total() const noexcept { return kernel_elements + mix_elements; }
};

template <class T>
class GuidanceUnit {
 public:
  virtual ~GuidanceUnit() = default;
  /// img and dep must share one C x H x W shape.
  virtual Var<T> forward(const Var<T>& img, const Var<T>& dep, Footprint* tally = nullptr) const = 0;
  virtual GuidanceKind kind() const noexcept = 0;
};

/// Per-pixel C x C x R x R kernels generated from the image feature.
template <class T>
class DynamicConvG1 final : public GuidanceUnit<T> {
 public:
  DynamicConvG1(nn::ParameterSet<T>& params, const std::string& name, std::size_t channels,
                const GuidanceOptions& opts);
  Var<T> forward(const Var<T>& img, const Var<T>& dep, Footprint* tally = nullptr) const override;
  GuidanceKind kind() const noexcept override { return GuidanceKind::dynamic_conv; }

  /// Exposed so tests can pin the generated kernels.
  nn::Conv2d<T> generator;

 private:
  std::size_t channels_;
  GuidanceOptions opts_;
};

/// Depthwise per-pixel R x R kernels followed by a C x C mix generated from
/// the pooled image feature.
template <class T>
class ConvFactorizedCF final : public GuidanceUnit<T> {
 public:
  ConvFactorizedCF(nn::ParameterSet<T>& params, const std::string& name, std::size_t channels,
                   const GuidanceOptions& opts);
  Var<T> forward(const Var<T>& img, const Var<T>& dep, Footprint* tally = nullptr) const override;
  GuidanceKind kind() const noexcept override { return GuidanceKind::factorized; }

  nn::Conv2d<T> depthwise_generator;
  nn::Linear<T> mix_generator;

 private:
  std::size_t channels_;
  GuidanceOptions opts_;
};

/// concat(img, dep) -> 3x3 conv -> global average pool -> per-channel gate on
/// dep -> C x C mix generated from the pooled image feature.
template <class T>
class EfficientGuidance final : public GuidanceUnit<T> {
 public:
  EfficientGuidance(nn::ParameterSet<T>& params, const std::string& name, std::size_t channels,
                    const GuidanceOptions& opts);
  Var<T> forward(const Var<T>& img, const Var<T>& dep, Footprint* tally = nullptr) const override;
  GuidanceKind kind() const noexcept override { return GuidanceKind::efficient; }

  nn::Conv2d<T> gate_conv;
  nn::Linear<T> mix_generator;

 private:
  std::size_t channels_;
};

template <class T>
std::unique_ptr<GuidanceUnit<T>> make_guidance_unit(GuidanceKind kind, nn::ParameterSet<T>& params,
                                                    const std::string& name, std::size_t channels,
                                                    const GuidanceOptions& opts);

/// Softmax-weighted convex combination of k same-shaped branches with
/// per-channel weights predicted from the branches themselves.
template <class T>
class AdaptiveFusion {
 public:
  AdaptiveFusion() = default;
  AdaptiveFusion(nn::ParameterSet<T>& params, const std::string& name, std::size_t channels,
                 std::size_t branches, bool use_bias);

  /// When `weights_out` is non-null it receives the k x C weights.
  Var<T> forward(const std::vector<Var<T>>& branches, Var<T>* weights_out = nullptr) const;

  nn::Conv2d<T> squeeze;
  nn::Linear<T> logits;

 private:
  std::size_t channels_ = 0;
  std::size_t branches_ = 0;
};

/// Inputs, per-repetition outputs and fused result of one guidance stage.
template <class T>
struct GuidanceStage {
  Var<T> image_feature;
  Var<T> depth_feature;
  std::vector<Var<T>> branches;
  Var<T> fused;
  std::size_t repetitions = 0;
};

/// Repetition 1 guides the depth feature with the image feature directly;
/// repetition n > 1 guides the previous output with an independently refined
/// (conv + relu) copy of the image feature. Branch outputs are then reduced
/// according to the fusion mode.
template <class T>
class RepetitiveGuidance {
 public:
  RepetitiveGuidance(nn::ParameterSet<T>& params, const std::string& name, std::size_t channels,
                     std::size_t repetitions, GuidanceKind kind, FusionMode mode,
                     const GuidanceOptions& opts);

  Var<T> forward(const Var<T>& img, const Var<T>& dep, GuidanceStage<T>* trace = nullptr,
                 Footprint* tally = nullptr) const;

  std::size_t repetitions() const noexcept { return units_.size(); }
  FusionMode mode() const noexcept { return mode_; }
  const GuidanceUnit<T>& unit(std::size_t n) const { return *units_.at(n); }
  const nn::Conv2d<T>& refinement(std::size_t n) const { return refine_.at(n); }
  const AdaptiveFusion<T>& adaptive_fusion() const { return *fusion_; }
  const nn::Conv2d<T>& concat_projection() const { return *concat_; }

 private:
  std::size_t channels_;
  FusionMode mode_;
  std::vector<std::unique_ptr<GuidanceUnit<T>>> units_;
  std::vector<nn::Conv2d<T>> refine_;  // refine_[n - 2] serves repetition n
  std::optional<nn::Conv2d<T>> concat_;
  std::optional<AdaptiveFusion<T>> fusion_;
};

}  // namespace rig::guidance
