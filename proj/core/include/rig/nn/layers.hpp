#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rig/nn/autograd.hpp"

namespace rig::nn {

/// Named trainable tensors in declaration order. Each tensor is initialized
/// from a stream derived from (seed, name), so two models that share a
/// parameter name start from the same values regardless of what else they
/// declare.
template <class T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
  };

  explicit ParameterSet(std::uint64_t seed = 0) : seed_(seed) {}

  /// Uniform in [-bound, bound].
  Var<T> create_uniform(const std::string& name, std::vector<std::size_t> dims, double bound);
  Var<T> create_constant(const std::string& name, std::vector<std::size_t> dims, T value);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  std::size_t element_count() const;
  void zero_grad();
  /// Sets every parameter value to zero.
  void zero_values();
  /// Hash of all parameter names, shapes and values.
  std::uint64_t checksum() const;
  const Entry* find(const std::string& name) const;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  Var<T> add(const std::string& name, Tensor<T> value);

  std::uint64_t seed_;
  std::vector<Entry> entries_;
};

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  /// Weights drawn from a He-style uniform scaled by `gain`.
  Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
         std::size_t window, std::size_t stride, bool with_bias, double gain = 1.0);

  Var<T> operator()(const Var<T>& x) const;

  Var<T> weight;
  Var<T> bias;
  ConvGeometry geometry;
  std::size_t in_channels = 0, out_channels = 0, window = 0;
};

/// Stride-2 transposed convolution (3x3, pad 1, output pad 1): exact 2x upsample.
template <class T>
class Deconv2d {
 public:
  Deconv2d() = default;
  Deconv2d(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
           bool with_bias, double gain = 1.0);

  Var<T> operator()(const Var<T>& x) const;

  Var<T> weight;
  Var<T> bias;
  DeconvGeometry geometry{2, 1, 1};
};

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias, double gain = 1.0);

  Var<T> operator()(const Var<T>& v) const;

  Var<T> weight;
  Var<T> bias;
};

}  // namespace rig::nn
