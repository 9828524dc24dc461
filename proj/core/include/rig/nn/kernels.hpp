#pragma once

#include <cstddef>
#include <vector>

#include "rig/nn/tensor.hpp"

// Forward and adjoint building blocks. The public entry points (conv2d,
// deconv2d, global_avg_pool, softmax_branches) validate their inputs; the
// *_raw helpers assume the caller already did and are what the autograd layer
// calls on its hot path.
namespace rig::nn {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Transposed convolution configuration. Output extent is
/// (in - 1) * stride - 2 * pad + window + output_pad.
struct DeconvGeometry {
  std::size_t stride = 2;
  std::size_t pad = 0;
  std::size_t output_pad = 0;
};

std::size_t conv_output_extent(std::size_t in, std::size_t window, ConvGeometry g);
std::size_t deconv_output_extent(std::size_t in, std::size_t window, DeconvGeometry g);

/// Cross-correlation with zero padding.
template <class T>
FeatureMap<T> conv2d(const FeatureMap<T>& x, const KernelBank<T>& k, std::size_t stride,
                     std::size_t pad);

/// Transposed convolution; must upsample by exactly 2x in both directions.
template <class T>
FeatureMap<T> deconv2d(const FeatureMap<T>& x, const KernelBank<T>& k, DeconvGeometry g);

template <class T>
FeatureMap<T> global_avg_pool(const FeatureMap<T>& x);

/// Softmax over the branch axis (rows) of a k x C matrix, one column at a time.
template <class T>
Tensor<T> softmax_branches(const Tensor<T>& logits);

// weights: (out, in, R, R); bias may be null.
template <class T>
FeatureMap<T> conv2d_raw(const FeatureMap<T>& x, const Tensor<T>& weights, const Tensor<T>* bias,
                         ConvGeometry g);

// Adjoint of conv2d_raw with respect to its input (bias excluded).
template <class T>
FeatureMap<T> conv2d_input_adjoint(const FeatureMap<T>& grad_out, const Tensor<T>& weights,
                                   const std::vector<std::size_t>& input_dims, ConvGeometry g);

// Accumulates dL/dW (and dL/db when grad_bias is non-null).
template <class T>
void conv2d_accumulate_weight_grad(const FeatureMap<T>& x, const FeatureMap<T>& grad_out,
                                   ConvGeometry g, Tensor<T>& grad_weights, Tensor<T>* grad_bias);

// weights: (in, out, R, R)
template <class T>
FeatureMap<T> deconv2d_raw(const FeatureMap<T>& x, const Tensor<T>& weights, const Tensor<T>* bias,
                           DeconvGeometry g);

// out[o,y,x] = sum_i sum_(ky,kx) K[(o*C+i)*R*R + ky*R + kx, y, x] * in[i, y+ky-r, x+kx-r]
template <class T>
FeatureMap<T> dynamic_conv_raw(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                               std::size_t window);

template <class T>
void dynamic_conv_backward(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                           std::size_t window, const FeatureMap<T>& grad_out,
                           FeatureMap<T>* grad_input, FeatureMap<T>* grad_kernels);

// out[c,y,x] = sum_(ky,kx) K[c*R*R + ky*R + kx, y, x] * in[c, y+ky-r, x+kx-r]
template <class T>
FeatureMap<T> depthwise_dynamic_conv_raw(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                                         std::size_t window);

template <class T>
void depthwise_dynamic_conv_backward(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                                     std::size_t window, const FeatureMap<T>& grad_out,
                                     FeatureMap<T>* grad_input, FeatureMap<T>* grad_kernels);

}  // namespace rig::nn
