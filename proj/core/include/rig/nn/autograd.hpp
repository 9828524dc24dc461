#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "rig/nn/kernels.hpp"
#include "rig/nn/tensor.hpp"

// Reverse-mode differentiation over Tensor values. Each op produces a Var that
// remembers its parents and a closure accumulating gradients into them. Nodes
// that do not depend on any trainable leaf carry no closure, so inference does
// not retain the graph.
namespace rig::nn {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.dims());
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var leaf(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  explicit operator bool() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const std::vector<std::size_t>& dims() const { return node_->value.dims(); }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Seeds d(output)/d(output) = 1 (output must hold a single element) and
/// propagates to every reachable node requiring gradients.
template <class T>
void backward(const Var<T>& output);

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weights, const Var<T>& bias, ConvGeometry g);
template <class T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& weights, const Var<T>& bias, DeconvGeometry g);

template <class T>
Var<T> relu(const Var<T>& x);
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> add_all(std::span<const Var<T>> terms);
template <class T>
Var<T> concat_channels(std::span<const Var<T>> parts);
template <class T>
Var<T> global_avg_pool(const Var<T>& x);
template <class T>
Var<T> reshape(const Var<T>& x, std::vector<std::size_t> dims);

/// x (C x H x W) times a per-channel gate (C x 1 x 1), broadcast over pixels.
template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gate);

/// y = W v + b for v of shape (n x 1 x 1), W of shape (m x n); b may be empty.
template <class T>
Var<T> linear(const Var<T>& v, const Var<T>& weights, const Var<T>& bias);

/// out[c] = sum_d M[c, d] x[d]; `mix` holds the C x C matrix row-major as (C*C x 1 x 1).
template <class T>
Var<T> channel_mix(const Var<T>& x, const Var<T>& mix);

template <class T>
Var<T> softmax_branches(const Var<T>& logits);

/// sum_n alpha[n, c] * branches[n][c, y, x]; alpha is k x C.
template <class T>
Var<T> weighted_sum(std::span<const Var<T>> branches, const Var<T>& alpha);

template <class T>
Var<T> dynamic_conv(const Var<T>& input, const Var<T>& kernels, std::size_t window);
template <class T>
Var<T> depthwise_dynamic_conv(const Var<T>& input, const Var<T>& kernels, std::size_t window);

/// (1/m) * sum over mask of (gt - pred)^2, as a single-element tensor.
template <class T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& gt, std::span<const std::uint8_t> mask);

/// scale * sum over mask of (gt - pred)^2. Batches normalize by their total
/// valid-pixel count through `scale`.
template <class T>
Var<T> masked_sum_squares(const Var<T>& pred, const Tensor<T>& gt,
                          std::span<const std::uint8_t> mask, T scale);

/// sum(x * weights) for a constant weight tensor of the same shape.
template <class T>
Var<T> weighted_total(const Var<T>& x, const Tensor<T>& weights);

}  // namespace rig::nn
