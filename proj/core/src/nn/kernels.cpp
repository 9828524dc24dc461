#include "rig/nn/kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rig::nn {

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  return os.str();
}

std::size_t conv_output_extent(std::size_t in, std::size_t window, ConvGeometry g) {
  if (g.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * g.pad;
  if (padded < window) throw std::invalid_argument("conv2d: non-positive output extent");
  return (padded - window) / g.stride + 1;
}

std::size_t deconv_output_extent(std::size_t in, std::size_t window, DeconvGeometry g) {
  if (g.stride == 0 || in == 0) throw std::invalid_argument("deconv2d: bad geometry");
  const std::size_t grown = (in - 1) * g.stride + window + g.output_pad;
  if (grown <= 2 * g.pad) throw std::invalid_argument("deconv2d: non-positive output extent");
  return grown - 2 * g.pad;
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvDims {
  std::size_t in_c, in_h, in_w, out_c, out_h, out_w, window;
  ConvGeometry geom;
  bool pointwise() const { return window == 1 && geom.stride == 1 && geom.pad == 0; }
  std::size_t patch() const { return in_c * window * window; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <class T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const std::size_t R = d.window;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(d.geom.pad);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(d.in_h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(d.in_w);
  const std::size_t s = d.geom.stride;
  for (std::size_t a = 0; a < d.in_c; ++a) {
    const T* plane = x + a * d.in_h * d.in_w;
    for (std::size_t ky = 0; ky < R; ++ky) {
      for (std::size_t kx = 0; kx < R; ++kx) {
        T* row = cols + ((a * R + ky) * R + kx) * d.pixels();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
          T* dst = row + oy * d.out_w;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * W;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - pad;
            dst[ox] = (ix < 0 || ix >= W) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_accumulate(const T* cols, const ConvDims& d, T* x) {
  const std::size_t R = d.window;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(d.geom.pad);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(d.in_h);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(d.in_w);
  const std::size_t s = d.geom.stride;
  for (std::size_t a = 0; a < d.in_c; ++a) {
    T* plane = x + a * d.in_h * d.in_w;
    for (std::size_t ky = 0; ky < R; ++ky) {
      for (std::size_t kx = 0; kx < R; ++kx) {
        const T* row = cols + ((a * R + ky) * R + kx) * d.pixels();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - pad;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + oy * d.out_w;
          T* dst = plane + iy * W;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
ConvDims conv_dims(const std::vector<std::size_t>& x_dims, const Tensor<T>& weights,
                   ConvGeometry g) {
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    throw std::invalid_argument("conv2d: weights must be out x in x R x R");
  }
  if (x_dims.size() != 3 || x_dims[0] != weights.dim(1)) {
    throw std::invalid_argument("conv2d: channel mismatch between input " +
                                shape_string(x_dims) + " and kernel bank " +
                                shape_string(weights.dims()));
  }
  const std::size_t R = weights.dim(2);
  return ConvDims{x_dims[0],
                  x_dims[1],
                  x_dims[2],
                  weights.dim(0),
                  conv_output_extent(x_dims[1], R, g),
                  conv_output_extent(x_dims[2], R, g),
                  R,
                  g};
}

}  // namespace

template <class T>
FeatureMap<T> conv2d_raw(const FeatureMap<T>& x, const Tensor<T>& weights, const Tensor<T>* bias,
                         ConvGeometry g) {
  const ConvDims d = conv_dims(x.dims(), weights, g);
  FeatureMap<T> y({d.out_c, d.out_h, d.out_w});
  ConstMapMat<T> w(weights.data(), d.out_c, d.patch());
  MapMat<T> out(y.data(), d.out_c, d.pixels());
  if (d.pointwise()) {
    out.noalias() = w * ConstMapMat<T>(x.data(), d.in_c, d.pixels());
  } else {
    std::vector<T> cols(d.patch() * d.pixels());
    im2col(x.data(), d, cols.data());
    out.noalias() = w * ConstMapMat<T>(cols.data(), d.patch(), d.pixels());
  }
  if (bias != nullptr) {
    for (std::size_t o = 0; o < d.out_c; ++o) out.row(o).array() += (*bias)[o];
  }
  return y;
}

template <class T>
FeatureMap<T> conv2d_input_adjoint(const FeatureMap<T>& grad_out, const Tensor<T>& weights,
                                   const std::vector<std::size_t>& input_dims, ConvGeometry g) {
  const ConvDims d = conv_dims(input_dims, weights, g);
  if (grad_out.dims() != std::vector<std::size_t>{d.out_c, d.out_h, d.out_w}) {
    throw std::invalid_argument("conv2d adjoint: gradient shape mismatch");
  }
  FeatureMap<T> gx(input_dims);
  ConstMapMat<T> w(weights.data(), d.out_c, d.patch());
  ConstMapMat<T> gy(grad_out.data(), d.out_c, d.pixels());
  if (d.pointwise()) {
    MapMat<T>(gx.data(), d.in_c, d.pixels()).noalias() = w.transpose() * gy;
  } else {
    std::vector<T> cols(d.patch() * d.pixels());
    MapMat<T>(cols.data(), d.patch(), d.pixels()).noalias() = w.transpose() * gy;
    col2im_accumulate(cols.data(), d, gx.data());
  }
  return gx;
}

template <class T>
void conv2d_accumulate_weight_grad(const FeatureMap<T>& x, const FeatureMap<T>& grad_out,
                                   ConvGeometry g, Tensor<T>& grad_weights, Tensor<T>* grad_bias) {
  const ConvDims d = conv_dims(x.dims(), grad_weights, g);
  ConstMapMat<T> gy(grad_out.data(), d.out_c, d.pixels());
  MapMat<T> gw(grad_weights.data(), d.out_c, d.patch());
  if (d.pointwise()) {
    gw.noalias() += gy * ConstMapMat<T>(x.data(), d.in_c, d.pixels()).transpose();
  } else {
    std::vector<T> cols(d.patch() * d.pixels());
    im2col(x.data(), d, cols.data());
    gw.noalias() += gy * ConstMapMat<T>(cols.data(), d.patch(), d.pixels()).transpose();
  }
  if (grad_bias != nullptr) {
    for (std::size_t o = 0; o < d.out_c; ++o) (*grad_bias)[o] += gy.row(o).sum();
  }
}

template <class T>
FeatureMap<T> deconv2d_raw(const FeatureMap<T>& x, const Tensor<T>& weights, const Tensor<T>* bias,
                           DeconvGeometry g) {
  if (weights.rank() != 4 || x.rank() != 3 || x.channels() != weights.dim(0)) {
    throw std::invalid_argument("deconv2d: channel mismatch between input " +
                                shape_string(x.dims()) + " and kernel bank " +
                                shape_string(weights.dims()));
  }
  if (g.output_pad >= g.stride) {
    throw std::invalid_argument("deconv2d: output padding must be smaller than stride");
  }
  const std::size_t R = weights.dim(2);
  const std::vector<std::size_t> out_dims{weights.dim(1), deconv_output_extent(x.height(), R, g),
                                          deconv_output_extent(x.width(), R, g)};
  FeatureMap<T> y = conv2d_input_adjoint(x, weights, out_dims, ConvGeometry{g.stride, g.pad});
  if (bias != nullptr) {
    const std::size_t plane = out_dims[1] * out_dims[2];
    for (std::size_t o = 0; o < out_dims[0]; ++o) {
      T* p = y.data() + o * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += (*bias)[o];
    }
  }
  return y;
}

template <class T>
FeatureMap<T> conv2d(const FeatureMap<T>& x, const KernelBank<T>& k, std::size_t stride,
                     std::size_t pad) {
  require_feature_map(x, "conv2d");
  if (k.weights.dims() != std::vector<std::size_t>{k.out_channels, k.in_channels, k.window,
                                                   k.window}) {
    throw std::invalid_argument("conv2d: kernel bank weight shape inconsistent");
  }
  if (x.channels() != k.in_channels) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.channels()) +
                                " channels, kernel bank expects " +
                                std::to_string(k.in_channels));
  }
  return conv2d_raw(x, k.weights, k.has_bias() ? &k.bias : nullptr, ConvGeometry{stride, pad});
}

template <class T>
FeatureMap<T> deconv2d(const FeatureMap<T>& x, const KernelBank<T>& k, DeconvGeometry g) {
  require_feature_map(x, "deconv2d");
  if (k.weights.dims() != std::vector<std::size_t>{k.in_channels, k.out_channels, k.window,
                                                   k.window}) {
    throw std::invalid_argument("deconv2d: kernel bank weight shape inconsistent");
  }
  if (x.channels() != k.in_channels) {
    throw std::invalid_argument("deconv2d: channel mismatch");
  }
  if (g.stride != 2 || deconv_output_extent(x.height(), k.window, g) != 2 * x.height() ||
      deconv_output_extent(x.width(), k.window, g) != 2 * x.width()) {
    throw std::invalid_argument("deconv2d: configuration does not upsample by exactly 2x");
  }
  return deconv2d_raw(x, k.weights, k.has_bias() ? &k.bias : nullptr, g);
}

template <class T>
FeatureMap<T> global_avg_pool(const FeatureMap<T>& x) {
  require_feature_map(x, "global_avg_pool");
  const std::size_t plane = x.height() * x.width();
  FeatureMap<T> out({x.channels(), 1, 1});
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const T* p = x.data() + c * plane;
    T sum = T(0);
    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    out[c] = sum / static_cast<T>(plane);
  }
  return out;
}

template <class T>
Tensor<T> softmax_branches(const Tensor<T>& logits) {
  if (logits.rank() != 2 || logits.dim(0) == 0 || logits.dim(1) == 0) {
    throw std::invalid_argument("softmax_branches: expected a non-empty k x C matrix");
  }
  if (!logits.all_finite()) throw std::invalid_argument("softmax_branches: non-finite input");
  const std::size_t k = logits.dim(0);
  const std::size_t C = logits.dim(1);
  Tensor<T> out(logits.dims());
  for (std::size_t c = 0; c < C; ++c) {
    T peak = logits[c];
    for (std::size_t n = 1; n < k; ++n) peak = std::max(peak, logits[n * C + c]);
    T total = T(0);
    for (std::size_t n = 0; n < k; ++n) {
      const T e = std::exp(logits[n * C + c] - peak);
      out[n * C + c] = e;
      total += e;
    }
    for (std::size_t n = 0; n < k; ++n) out[n * C + c] /= total;
  }
  return out;
}

namespace {

void require_dynamic_shapes(const std::vector<std::size_t>& in, const std::vector<std::size_t>& k,
                            std::size_t taps_per_pixel, std::size_t window, const char* what) {
  if (window == 0 || window % 2 == 0) {
    throw std::invalid_argument(std::string(what) + ": window must be odd");
  }
  if (in.size() != 3 || k.size() != 3 || k[0] != taps_per_pixel || k[1] != in[1] ||
      k[2] != in[2]) {
    throw std::invalid_argument(std::string(what) + ": kernel field " + shape_string(k) +
                                " does not match input " + shape_string(in));
  }
}

// Valid output-column range for a horizontal tap offset dx.
inline void tap_range(std::ptrdiff_t d, std::size_t extent, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(extent);
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -d));
  hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(n, n - d));
  if (hi < lo) hi = lo;
}

// Index plus a tap offset; callers only pass in-range combinations.
inline std::size_t shifted(std::size_t i, std::ptrdiff_t d) {
  return static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + d);
}

}  // namespace

template <class T>
FeatureMap<T> dynamic_conv_raw(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                               std::size_t window) {
  const std::size_t C = input.channels(), H = input.height(), W = input.width();
  const std::size_t RR = window * window;
  require_dynamic_shapes(input.dims(), kernels.dims(), C * C * RR, window, "dynamic_conv");
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window / 2);
  const std::size_t plane = H * W;
  FeatureMap<T> out({C, H, W});
  for (std::size_t o = 0; o < C; ++o) {
    T* dst_plane = out.data() + o * plane;
    for (std::size_t i = 0; i < C; ++i) {
      const T* src_plane = input.data() + i * plane;
      for (std::size_t t = 0; t < RR; ++t) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(t / window) - r;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(t % window) - r;
        const T* kplane = kernels.data() + ((o * C + i) * RR + t) * plane;
        std::size_t y0, y1, x0, x1;
        tap_range(dy, H, y0, y1);
        tap_range(dx, W, x0, x1);
        for (std::size_t y = y0; y < y1; ++y) {
          const T* kr = kplane + y * W + x0;
          const T* sr = src_plane + shifted(y, dy) * W + shifted(x0, dx);
          T* dr = dst_plane + y * W + x0;
          for (std::size_t x = 0; x < x1 - x0; ++x) dr[x] += kr[x] * sr[x];
        }
      }
    }
  }
  return out;
}

template <class T>
void dynamic_conv_backward(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                           std::size_t window, const FeatureMap<T>& grad_out,
                           FeatureMap<T>* grad_input, FeatureMap<T>* grad_kernels) {
  const std::size_t C = input.channels(), H = input.height(), W = input.width();
  const std::size_t RR = window * window;
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window / 2);
  const std::size_t plane = H * W;
  for (std::size_t o = 0; o < C; ++o) {
    const T* g_plane = grad_out.data() + o * plane;
    for (std::size_t i = 0; i < C; ++i) {
      const T* src_plane = input.data() + i * plane;
      for (std::size_t t = 0; t < RR; ++t) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(t / window) - r;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(t % window) - r;
        const std::size_t kidx = ((o * C + i) * RR + t) * plane;
        std::size_t y0, y1, x0, x1;
        tap_range(dy, H, y0, y1);
        tap_range(dx, W, x0, x1);
        for (std::size_t y = y0; y < y1; ++y) {
          const T* gr = g_plane + y * W + x0;
          const std::size_t src_off = shifted(y, dy) * W + shifted(x0, dx);
          if (grad_kernels != nullptr) {
            T* gk = grad_kernels->data() + kidx + y * W + x0;
            const T* sr = src_plane + src_off;
            for (std::size_t x = 0; x < x1 - x0; ++x) gk[x] += gr[x] * sr[x];
          }
          if (grad_input != nullptr) {
            T* gi = grad_input->data() + i * plane + src_off;
            const T* kr = kernels.data() + kidx + y * W + x0;
            for (std::size_t x = 0; x < x1 - x0; ++x) gi[x] += gr[x] * kr[x];
          }
        }
      }
    }
  }
}

template <class T>
FeatureMap<T> depthwise_dynamic_conv_raw(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                                         std::size_t window) {
  const std::size_t C = input.channels(), H = input.height(), W = input.width();
  const std::size_t RR = window * window;
  require_dynamic_shapes(input.dims(), kernels.dims(), C * RR, window, "depthwise_dynamic_conv");
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window / 2);
  const std::size_t plane = H * W;
  FeatureMap<T> out({C, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    T* dst_plane = out.data() + c * plane;
    const T* src_plane = input.data() + c * plane;
    for (std::size_t t = 0; t < RR; ++t) {
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(t / window) - r;
      const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(t % window) - r;
      const T* kplane = kernels.data() + (c * RR + t) * plane;
      std::size_t y0, y1, x0, x1;
      tap_range(dy, H, y0, y1);
      tap_range(dx, W, x0, x1);
      for (std::size_t y = y0; y < y1; ++y) {
        const T* kr = kplane + y * W + x0;
        const T* sr = src_plane + shifted(y, dy) * W + shifted(x0, dx);
        T* dr = dst_plane + y * W + x0;
        for (std::size_t x = 0; x < x1 - x0; ++x) dr[x] += kr[x] * sr[x];
      }
    }
  }
  return out;
}

template <class T>
void depthwise_dynamic_conv_backward(const FeatureMap<T>& input, const FeatureMap<T>& kernels,
                                     std::size_t window, const FeatureMap<T>& grad_out,
                                     FeatureMap<T>* grad_input, FeatureMap<T>* grad_kernels) {
  const std::size_t C = input.channels(), H = input.height(), W = input.width();
  const std::size_t RR = window * window;
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window / 2);
  const std::size_t plane = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    const T* g_plane = grad_out.data() + c * plane;
    const T* src_plane = input.data() + c * plane;
    for (std::size_t t = 0; t < RR; ++t) {
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(t / window) - r;
      const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(t % window) - r;
      const std::size_t kidx = (c * RR + t) * plane;
      std::size_t y0, y1, x0, x1;
      tap_range(dy, H, y0, y1);
      tap_range(dx, W, x0, x1);
      for (std::size_t y = y0; y < y1; ++y) {
        const T* gr = g_plane + y * W + x0;
        const std::size_t src_off = shifted(y, dy) * W + shifted(x0, dx);
        if (grad_kernels != nullptr) {
          T* gk = grad_kernels->data() + kidx + y * W + x0;
          const T* sr = src_plane + src_off;
          for (std::size_t x = 0; x < x1 - x0; ++x) gk[x] += gr[x] * sr[x];
        }
        if (grad_input != nullptr) {
          T* gi = grad_input->data() + c * plane + src_off;
          const T* kr = kernels.data() + kidx + y * W + x0;
          for (std::size_t x = 0; x < x1 - x0; ++x) gi[x] += gr[x] * kr[x];
        }
      }
    }
  }
}

#define RIG_INSTANTIATE_KERNELS(T)                                                              \
  template FeatureMap<T> conv2d(const FeatureMap<T>&, const KernelBank<T>&, std::size_t,        \
                                std::size_t);                                                   \
  template FeatureMap<T> deconv2d(const FeatureMap<T>&, const KernelBank<T>&, DeconvGeometry);  \
  template FeatureMap<T> global_avg_pool(const FeatureMap<T>&);                                 \
  template Tensor<T> softmax_branches(const Tensor<T>&);                                        \
  template FeatureMap<T> conv2d_raw(const FeatureMap<T>&, const Tensor<T>&, const Tensor<T>*,   \
                                    ConvGeometry);                                              \
  template FeatureMap<T> conv2d_input_adjoint(const FeatureMap<T>&, const Tensor<T>&,           \
                                              const std::vector<std::size_t>&, ConvGeometry);   \
  template void conv2d_accumulate_weight_grad(const FeatureMap<T>&, const FeatureMap<T>&,       \
                                              ConvGeometry, Tensor<T>&, Tensor<T>*);            \
  template FeatureMap<T> deconv2d_raw(const FeatureMap<T>&, const Tensor<T>&, const Tensor<T>*, \
                                      DeconvGeometry);                                          \
  template FeatureMap<T> dynamic_conv_raw(const FeatureMap<T>&, const FeatureMap<T>&,           \
                                          std::size_t);                                         \
  template void dynamic_conv_backward(const FeatureMap<T>&, const FeatureMap<T>&, std::size_t,  \
                                      const FeatureMap<T>&, FeatureMap<T>*, FeatureMap<T>*);    \
  template FeatureMap<T> depthwise_dynamic_conv_raw(const FeatureMap<T>&, const FeatureMap<T>&, \
                                                    std::size_t);                               \
  template void depthwise_dynamic_conv_backward(const FeatureMap<T>&, const FeatureMap<T>&,     \
                                                std::size_t, const FeatureMap<T>&,              \
                                                FeatureMap<T>*, FeatureMap<T>*);

RIG_INSTANTIATE_KERNELS(float)
RIG_INSTANTIATE_KERNELS(double)

#undef RIG_INSTANTIATE_KERNELS

}  // namespace rig::nn
