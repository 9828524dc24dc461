#pragma once

// Reference implementations written straight from the definitions, with no
// shared code paths with the library kernels. Everything here is slow on
// purpose.

#include <cmath>
#include <cstdint>
#include <vector>

#include "rig/nn/random.hpp"
#include "rig/nn/tensor.hpp"

namespace oracle {

using rig::nn::Tensor;

inline Tensor<double> random_tensor(rig::nn::Rng& rng, std::vector<std::size_t> dims,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(dims));
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

inline double at_or_zero(const Tensor<double>& x, std::size_t c, long y, long xx) {
  if (y < 0 || xx < 0 || y >= static_cast<long>(x.height()) || xx >= static_cast<long>(x.width())) {
    return 0.0;
  }
  return x(c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
}

/// Cross-correlation, zero padding; w is (out, in, R, R).
inline Tensor<double> direct_conv(const Tensor<double>& x, const Tensor<double>& w,
                                  const Tensor<double>* b, std::size_t stride, std::size_t pad) {
  const std::size_t co = w.dim(0), ci = w.dim(1), r = w.dim(2);
  const std::size_t ho = (x.height() + 2 * pad - r) / stride + 1;
  const std::size_t wo = (x.width() + 2 * pad - r) / stride + 1;
  Tensor<double> out({co, ho, wo});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        double s = b ? (*b)[o] : 0.0;
        for (std::size_t i = 0; i < ci; ++i) {
          for (std::size_t ky = 0; ky < r; ++ky) {
            for (std::size_t kx = 0; kx < r; ++kx) {
              const long sy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long sx = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
              s += w[((o * ci + i) * r + ky) * r + kx] * at_or_zero(x, i, sy, sx);
            }
          }
        }
        out(o, y, xx) = s;
      }
    }
  }
  return out;
}

/// Transposed convolution obtained by running the direct-convolution loop
/// backwards: every product x[i,y,x] * w[i,o,ky,kx] is scattered to the
/// output pixel that would have gathered it. w is (in, out, R, R).
inline Tensor<double> adjoint_deconv(const Tensor<double>& x, const Tensor<double>& w,
                                     std::size_t stride, std::size_t pad, std::size_t out_h,
                                     std::size_t out_w) {
  const std::size_t ci = w.dim(0), co = w.dim(1), r = w.dim(2);
  Tensor<double> out({co, out_h, out_w});
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t y = 0; y < x.height(); ++y) {
      for (std::size_t xx = 0; xx < x.width(); ++xx) {
        for (std::size_t o = 0; o < co; ++o) {
          for (std::size_t ky = 0; ky < r; ++ky) {
            for (std::size_t kx = 0; kx < r; ++kx) {
              const long ty = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long tx = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
              if (ty < 0 || tx < 0 || ty >= static_cast<long>(out_h) || tx >= static_cast<long>(out_w)) {
                continue;
              }
              out(o, static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)) +=
                  x(i, y, xx) * w[((i * co + o) * r + ky) * r + kx];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Per-pixel spatially-variant convolution: the kernel for output channel o,
/// input channel i, tap (ky,kx) at pixel (y,x) is K[((o*C+i)*R+ky)*R+kx, y, x].
inline Tensor<double> per_pixel_dynamic_conv(const Tensor<double>& in, const Tensor<double>& k,
                                             std::size_t r) {
  const std::size_t c = in.channels(), h = in.height(), w = in.width();
  const long half = static_cast<long>(r / 2);
  Tensor<double> out({c, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t o = 0; o < c; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
          for (std::size_t ky = 0; ky < r; ++ky) {
            for (std::size_t kx = 0; kx < r; ++kx) {
              const double kv = k(((o * c + i) * r + ky) * r + kx, y, x);
              s += kv * at_or_zero(in, i, static_cast<long>(y) + static_cast<long>(ky) - half,
                                   static_cast<long>(x) + static_cast<long>(kx) - half);
            }
          }
        }
        out(o, y, x) = s;
      }
    }
  }
  return out;
}

/// Depthwise per-pixel filtering followed by a C x C channel mix (row-major M[o*C+i]).
inline Tensor<double> depthwise_then_mix(const Tensor<double>& in, const Tensor<double>& k,
                                         std::size_t r, const Tensor<double>& mix) {
  const std::size_t c = in.channels(), h = in.height(), w = in.width();
  const long half = static_cast<long>(r / 2);
  Tensor<double> filtered({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t ky = 0; ky < r; ++ky) {
          for (std::size_t kx = 0; kx < r; ++kx) {
            s += k((ch * r + ky) * r + kx, y, x) *
                 at_or_zero(in, ch, static_cast<long>(y) + static_cast<long>(ky) - half,
                            static_cast<long>(x) + static_cast<long>(kx) - half);
          }
        }
        filtered(ch, y, x) = s;
      }
    }
  }
  Tensor<double> out({c, h, w});
  for (std::size_t o = 0; o < c; ++o) {
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t p = 0; p < h * w; ++p) out[o * h * w + p] += mix[o * c + i] * filtered[i * h * w + p];
    }
  }
  return out;
}

inline Tensor<double> pool_mean(const Tensor<double>& x) {
  const std::size_t plane = x.height() * x.width();
  Tensor<double> out({x.channels(), 1, 1});
  for (std::size_t c = 0; c < x.channels(); ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += x[c * plane + p];
    out[c] = s / static_cast<double>(plane);
  }
  return out;
}

/// W v + b with W (m x n) row-major.
inline std::vector<double> affine(const Tensor<double>& w, const Tensor<double>& b,
                                  const Tensor<double>& v) {
  const std::size_t m = w.dim(0), n = w.dim(1);
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = b.empty() ? 0.0 : b[r];
    for (std::size_t c = 0; c < n; ++c) s += w[r * n + c] * v[c];
    out[r] = s;
  }
  return out;
}

/// Gate from a 3x3 convolution over concat(img, dep) averaged per channel,
/// applied to dep, then the C x C matrix generated from the pooled image.
inline Tensor<double> efficient_guidance(const Tensor<double>& img, const Tensor<double>& dep,
                                         const Tensor<double>& gate_w, const Tensor<double>& gate_b,
                                         const Tensor<double>& mix_w, const Tensor<double>& mix_b) {
  const std::size_t c = img.channels(), h = img.height(), w = img.width(), plane = h * w;
  Tensor<double> both({2 * c, h, w});
  for (std::size_t i = 0; i < c * plane; ++i) {
    both[i] = img[i];
    both[c * plane + i] = dep[i];
  }
  const Tensor<double> gate =
      pool_mean(direct_conv(both, gate_w, gate_b.empty() ? nullptr : &gate_b, 1, 1));
  const std::vector<double> mix = affine(mix_w, mix_b, pool_mean(img));
  Tensor<double> out({c, h, w});
  for (std::size_t o = 0; o < c; ++o) {
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        out[o * plane + p] += mix[o * c + i] * gate[i] * dep[i * plane + p];
      }
    }
  }
  return out;
}

inline Tensor<double> relu(Tensor<double> x) {
  for (double& v : x.storage()) v = v > 0.0 ? v : 0.0;
  return x;
}

inline double max_rel_diff(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.dims() != b.dims()) return INFINITY;
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::fabs(b[i]));
    diff = std::max(diff, std::fabs(a[i] - b[i]));
  }
  return diff / std::max(scale, 1e-300);
}

}  // namespace oracle
