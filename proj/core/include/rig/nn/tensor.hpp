#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rig::nn {

/// Dense row-major array of rank 1..4. Rank-3 tensors are feature maps laid
/// out as (channel, row, column).
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims, T fill = T(0))
      : dims_(std::move(dims)), values_(element_count(dims_), fill) {}

  Tensor(std::initializer_list<std::size_t> dims, T fill = T(0))
      : Tensor(std::vector<std::size_t>(dims), fill) {}

  Tensor(std::vector<std::size_t> dims, std::vector<T> values)
      : dims_(std::move(dims)), values_(std::move(values)) {
    if (values_.size() != element_count(dims_)) {
      throw std::invalid_argument("tensor: value count does not match shape");
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  // Feature-map accessors; only meaningful at rank 3.
  std::size_t channels() const { return dims_.at(0); }
  std::size_t height() const { return dims_.at(1); }
  std::size_t width() const { return dims_.at(2); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& storage() noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  T& operator()(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return values_[(c * dims_[1] + y) * dims_[2] + x];
  }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return values_[(c * dims_[1] + y) * dims_[2] + x];
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    for (const T v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& other) const noexcept { return dims_ == other.dims_; }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.values_ == b.values_;
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    if (dims.empty() || dims.size() > 4) {
      throw std::invalid_argument("tensor: rank must be 1..4");
    }
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<T> values_;
};

/// C x H x W activation carrier.
template <class T>
using FeatureMap = Tensor<T>;

template <class T>
FeatureMap<T> make_feature_map(std::size_t channels, std::size_t height, std::size_t width,
                               T fill = T(0)) {
  if (channels == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("feature map: dimensions must be positive");
  }
  return FeatureMap<T>({channels, height, width}, fill);
}

std::string shape_string(const std::vector<std::size_t>& dims);

template <class T>
void require_feature_map(const Tensor<T>& t, const char* what) {
  if (t.rank() != 3) {
    throw std::invalid_argument(std::string(what) + ": expected a C x H x W feature map, got " +
                                shape_string(t.dims()));
  }
  if (!t.all_finite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

/// Spatial filter bank. Convolution weights are (out, in, R, R); transposed
/// convolution weights are (in, out, R, R), matching the adjoint relation.
template <class T>
struct KernelBank {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t window = 0;
  Tensor<T> weights;
  Tensor<T> bias;  // empty when disabled

  KernelBank() = default;
  KernelBank(std::size_t out, std::size_t in, std::size_t r, bool with_bias)
      : out_channels(out), in_channels(in), window(r), weights({out, in, r, r}) {
    if (with_bias) bias = Tensor<T>({out});
  }

  bool has_bias() const noexcept { return !bias.empty(); }
};

}  // namespace rig::nn
