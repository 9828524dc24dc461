#include "rig/nn/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace rig::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

template <class T, class Fn>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, Fn&& fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  for (const auto& v : inputs) needs = needs || v.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& v : inputs) {
      if (v) node->parents.push_back(v.node());
    }
    node->backward_fn = std::forward<Fn>(fn);
  }
  return Var<T>(std::move(node));
}

void require_same(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                  const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a) +
                                " vs " + shape_string(b));
  }
}

template <class T>
Tensor<T> plane_sums(const Tensor<T>& g) {
  const std::size_t C = g.channels(), plane = g.height() * g.width();
  Tensor<T> out({C});
  for (std::size_t c = 0; c < C; ++c) {
    T s = T(0);
    const T* p = g.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    out[c] = s;
  }
  return out;
}

}  // namespace

template <class T>
void backward(const Var<T>& output) {
  if (!output || output.value().size() != 1) {
    throw std::invalid_argument("backward: output must be a single-element tensor");
  }
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weights, const Var<T>& bias, ConvGeometry g) {
  const Tensor<T>* b = bias ? &bias.value() : nullptr;
  Tensor<T> y = conv2d_raw(x.value(), weights.value(), b, g);
  return make_result<T>(std::move(y), {x, weights, bias}, [x, weights, bias, g](Node<T>& self) {
    auto xn = x.node();
    auto wn = weights.node();
    if (xn->requires_grad) {
      accumulate(xn->grad_buffer(), conv2d_input_adjoint(self.grad, wn->value, xn->value.dims(), g));
    }
    if (wn->requires_grad) {
      conv2d_accumulate_weight_grad<T>(xn->value, self.grad, g, wn->grad_buffer(), nullptr);
    }
    if (bias && bias.requires_grad()) accumulate(bias.node()->grad_buffer(), plane_sums(self.grad));
  });
}

template <class T>
Var<T> deconv2d(const Var<T>& x, const Var<T>& weights, const Var<T>& bias, DeconvGeometry g) {
  const Tensor<T>* b = bias ? &bias.value() : nullptr;
  Tensor<T> y = deconv2d_raw(x.value(), weights.value(), b, g);
  return make_result<T>(std::move(y), {x, weights, bias}, [x, weights, bias, g](Node<T>& self) {
    auto xn = x.node();
    auto wn = weights.node();
    const ConvGeometry cg{g.stride, g.pad};
    if (xn->requires_grad) {
      accumulate(xn->grad_buffer(), conv2d_raw<T>(self.grad, wn->value, nullptr, cg));
    }
    if (wn->requires_grad) {
      conv2d_accumulate_weight_grad<T>(self.grad, xn->value, cg, wn->grad_buffer(), nullptr);
    }
    if (bias && bias.requires_grad()) accumulate(bias.node()->grad_buffer(), plane_sums(self.grad));
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y = x.value();
  for (T& v : y.storage()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(y), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x.node()->grad_buffer();
    const T* out = self.value.data();
    const T* g = self.grad.data();
    for (std::size_t i = 0, n = gx.size(); i < n; ++i) {
      if (out[i] > T(0)) gx[i] += g[i];
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.dims(), b.dims(), "add");
  Tensor<T> y = a.value();
  accumulate(y, b.value());
  return make_result<T>(std::move(y), {a, b}, [a, b](Node<T>& self) {
    if (a.requires_grad()) accumulate(a.node()->grad_buffer(), self.grad);
    if (b.requires_grad()) accumulate(b.node()->grad_buffer(), self.grad);
  });
}

template <class T>
Var<T> add_all(std::span<const Var<T>> terms) {
  if (terms.empty()) throw std::invalid_argument("add_all: no terms");
  Tensor<T> y = terms[0].value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require_same(terms[0].dims(), terms[i].dims(), "add_all");
    accumulate(y, terms[i].value());
  }
  std::vector<Var<T>> inputs(terms.begin(), terms.end());
  return make_result<T>(std::move(y), inputs, [inputs](Node<T>& self) {
    for (const auto& t : inputs) {
      if (t.requires_grad()) accumulate(t.node()->grad_buffer(), self.grad);
    }
  });
}

template <class T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const std::size_t H = parts[0].value().height(), W = parts[0].value().width();
  std::size_t C = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 3 || p.value().height() != H || p.value().width() != W) {
      throw std::invalid_argument("concat_channels: spatial extents differ");
    }
    C += p.value().channels();
  }
  Tensor<T> y({C, H, W});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), y.data() + offset);
    offset += p.value().size();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return make_result<T>(std::move(y), inputs, [inputs](Node<T>& self) {
    std::size_t off = 0;
    for (const auto& p : inputs) {
      const std::size_t n = p.value().size();
      if (p.requires_grad()) {
        Tensor<T>& g = p.node()->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  Tensor<T> y = global_avg_pool(x.value());
  return make_result<T>(std::move(y), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x.node()->grad_buffer();
    const std::size_t plane = gx.height() * gx.width();
    for (std::size_t c = 0; c < gx.channels(); ++c) {
      const T share = self.grad[c] / static_cast<T>(plane);
      T* p = gx.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += share;
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, std::vector<std::size_t> dims) {
  Tensor<T> y(std::move(dims), x.value().storage());
  return make_result<T>(std::move(y), {x}, [x](Node<T>& self) {
    Tensor<T>& gx = x.node()->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gate) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3 || gate.value().size() != xv.channels()) {
    throw std::invalid_argument("scale_channels: gate must hold one value per channel");
  }
  const std::size_t C = xv.channels(), plane = xv.height() * xv.width();
  Tensor<T> y(xv.dims());
  for (std::size_t c = 0; c < C; ++c) {
    const T s = gate.value()[c];
    const T* src = xv.data() + c * plane;
    T* dst = y.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * s;
  }
  return make_result<T>(std::move(y), {x, gate}, [x, gate, C, plane](Node<T>& self) {
    const T* g = self.grad.data();
    if (x.requires_grad()) {
      Tensor<T>& gx = x.node()->grad_buffer();
      for (std::size_t c = 0; c < C; ++c) {
        const T s = gate.value()[c];
        for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += g[c * plane + i] * s;
      }
    }
    if (gate.requires_grad()) {
      Tensor<T>& gg = gate.node()->grad_buffer();
      const T* xv = x.value().data();
      for (std::size_t c = 0; c < C; ++c) {
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i) acc += g[c * plane + i] * xv[c * plane + i];
        gg[c] += acc;
      }
    }
  });
}

template <class T>
Var<T> linear(const Var<T>& v, const Var<T>& weights, const Var<T>& bias) {
  const Tensor<T>& w = weights.value();
  if (w.rank() != 2 || w.dim(1) != v.value().size()) {
    throw std::invalid_argument("linear: weight matrix " + shape_string(w.dims()) +
                                " does not accept input of size " +
                                std::to_string(v.value().size()));
  }
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor<T> y({m, 1, 1});
  for (std::size_t r = 0; r < m; ++r) {
    T acc = bias ? bias.value()[r] : T(0);
    for (std::size_t c = 0; c < n; ++c) acc += w[r * n + c] * v.value()[c];
    y[r] = acc;
  }
  return make_result<T>(std::move(y), {v, weights, bias}, [v, weights, bias, m, n](Node<T>& self) {
    const T* g = self.grad.data();
    if (v.requires_grad()) {
      Tensor<T>& gv = v.node()->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gv[c] += weights.value()[r * n + c] * g[r];
      }
    }
    if (weights.requires_grad()) {
      Tensor<T>& gw = weights.node()->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gw[r * n + c] += g[r] * v.value()[c];
      }
    }
    if (bias && bias.requires_grad()) {
      Tensor<T>& gb = bias.node()->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) gb[r] += g[r];
    }
  });
}

template <class T>
Var<T> channel_mix(const Var<T>& x, const Var<T>& mix) {
  const Tensor<T>& xv = x.value();
  const std::size_t C = xv.channels(), plane = xv.height() * xv.width();
  if (mix.value().size() != C * C) {
    throw std::invalid_argument("channel_mix: expected a " + std::to_string(C) + "x" +
                                std::to_string(C) + " mixing matrix");
  }
  Tensor<T> y(xv.dims());
  MapMat<T>(y.data(), C, plane).noalias() =
      ConstMapMat<T>(mix.value().data(), C, C) * ConstMapMat<T>(xv.data(), C, plane);
  return make_result<T>(std::move(y), {x, mix}, [x, mix, C, plane](Node<T>& self) {
    ConstMapMat<T> g(self.grad.data(), C, plane);
    if (x.requires_grad()) {
      MapMat<T>(x.node()->grad_buffer().data(), C, plane).noalias() +=
          ConstMapMat<T>(mix.value().data(), C, C).transpose() * g;
    }
    if (mix.requires_grad()) {
      MapMat<T>(mix.node()->grad_buffer().data(), C, C).noalias() +=
          g * ConstMapMat<T>(x.value().data(), C, plane).transpose();
    }
  });
}

template <class T>
Var<T> softmax_branches(const Var<T>& logits) {
  Tensor<T> y = softmax_branches(logits.value());
  return make_result<T>(std::move(y), {logits}, [logits](Node<T>& self) {
    const std::size_t k = self.value.dim(0), C = self.value.dim(1);
    Tensor<T>& gl = logits.node()->grad_buffer();
    for (std::size_t c = 0; c < C; ++c) {
      T inner = T(0);
      for (std::size_t n = 0; n < k; ++n) inner += self.value[n * C + c] * self.grad[n * C + c];
      for (std::size_t n = 0; n < k; ++n) {
        gl[n * C + c] += self.value[n * C + c] * (self.grad[n * C + c] - inner);
      }
    }
  });
}

template <class T>
Var<T> weighted_sum(std::span<const Var<T>> branches, const Var<T>& alpha) {
  if (branches.empty()) throw std::invalid_argument("weighted_sum: no branches");
  const std::size_t k = branches.size();
  const auto& dims = branches[0].dims();
  for (const auto& b : branches) require_same(dims, b.dims(), "weighted_sum");
  const std::size_t C = dims.at(0), plane = dims.at(1) * dims.at(2);
  if (alpha.value().rank() != 2 || alpha.value().dim(0) != k || alpha.value().dim(1) != C) {
    throw std::invalid_argument("weighted_sum: weights must be k x C");
  }
  Tensor<T> y(dims);
  for (std::size_t n = 0; n < k; ++n) {
    const T* src = branches[n].value().data();
    for (std::size_t c = 0; c < C; ++c) {
      const T a = alpha.value()[n * C + c];
      T* dst = y.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += a * src[c * plane + i];
    }
  }
  std::vector<Var<T>> inputs(branches.begin(), branches.end());
  inputs.push_back(alpha);
  return make_result<T>(std::move(y), inputs, [inputs, k, C, plane](Node<T>& self) {
    const Var<T>& alpha = inputs.back();
    const T* g = self.grad.data();
    for (std::size_t n = 0; n < k; ++n) {
      const Var<T>& b = inputs[n];
      if (b.requires_grad()) {
        Tensor<T>& gb = b.node()->grad_buffer();
        for (std::size_t c = 0; c < C; ++c) {
          const T a = alpha.value()[n * C + c];
          for (std::size_t i = 0; i < plane; ++i) gb[c * plane + i] += a * g[c * plane + i];
        }
      }
      if (alpha.requires_grad()) {
        Tensor<T>& ga = alpha.node()->grad_buffer();
        const T* bv = b.value().data();
        for (std::size_t c = 0; c < C; ++c) {
          T acc = T(0);
          for (std::size_t i = 0; i < plane; ++i) acc += g[c * plane + i] * bv[c * plane + i];
          ga[n * C + c] += acc;
        }
      }
    }
  });
}

template <class T>
Var<T> dynamic_conv(const Var<T>& input, const Var<T>& kernels, std::size_t window) {
  Tensor<T> y = dynamic_conv_raw(input.value(), kernels.value(), window);
  return make_result<T>(std::move(y), {input, kernels}, [input, kernels, window](Node<T>& self) {
    dynamic_conv_backward(input.value(), kernels.value(), window, self.grad,
                          input.requires_grad() ? &input.node()->grad_buffer() : nullptr,
                          kernels.requires_grad() ? &kernels.node()->grad_buffer() : nullptr);
  });
}

template <class T>
Var<T> depthwise_dynamic_conv(const Var<T>& input, const Var<T>& kernels, std::size_t window) {
  Tensor<T> y = depthwise_dynamic_conv_raw(input.value(), kernels.value(), window);
  return make_result<T>(std::move(y), {input, kernels}, [input, kernels, window](Node<T>& self) {
    depthwise_dynamic_conv_backward(
        input.value(), kernels.value(), window, self.grad,
        input.requires_grad() ? &input.node()->grad_buffer() : nullptr,
        kernels.requires_grad() ? &kernels.node()->grad_buffer() : nullptr);
  });
}

template <class T>
Var<T> masked_sum_squares(const Var<T>& pred, const Tensor<T>& gt,
                          std::span<const std::uint8_t> mask, T scale) {
  require_same(pred.dims(), gt.dims(), "masked loss");
  if (mask.size() != gt.size()) throw std::invalid_argument("masked loss: mask size mismatch");
  const T* p = pred.value().data();
  T acc = T(0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask[i]) {
      const T d = gt[i] - p[i];
      acc += d * d;
    }
  }
  Tensor<T> y({1});
  y[0] = scale * acc;
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  return make_result<T>(std::move(y), {pred},
                        [pred, gt, keep = std::move(keep), scale](Node<T>& self) {
                          Tensor<T>& gp = pred.node()->grad_buffer();
                          const T g = self.grad[0] * scale * T(2);
                          const T* p = pred.value().data();
                          for (std::size_t i = 0; i < gt.size(); ++i) {
                            if (keep[i]) gp[i] += g * (p[i] - gt[i]);
                          }
                        });
}

template <class T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& gt, std::span<const std::uint8_t> mask) {
  const auto valid = static_cast<std::size_t>(std::count_if(
      mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
  if (valid == 0) throw std::domain_error("masked_mse: no valid pixels in mask");
  return masked_sum_squares(pred, gt, mask, T(1) / static_cast<T>(valid));
}

template <class T>
Var<T> weighted_total(const Var<T>& x, const Tensor<T>& weights) {
  require_same(x.dims(), weights.dims(), "weighted_total");
  T acc = T(0);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += x.value()[i] * weights[i];
  Tensor<T> y({1});
  y[0] = acc;
  return make_result<T>(std::move(y), {x}, [x, weights](Node<T>& self) {
    Tensor<T>& gx = x.node()->grad_buffer();
    for (std::size_t i = 0; i < weights.size(); ++i) gx[i] += self.grad[0] * weights[i];
  });
}

#define RIG_INSTANTIATE_AUTOGRAD(T)                                                            \
  template void backward(const Var<T>&);                                                       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvGeometry);           \
  template Var<T> deconv2d(const Var<T>&, const Var<T>&, const Var<T>&, DeconvGeometry);       \
  template Var<T> relu(const Var<T>&);                                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                           \
  template Var<T> add_all(std::span<const Var<T>>);                                            \
  template Var<T> concat_channels(std::span<const Var<T>>);                                    \
  template Var<T> global_avg_pool(const Var<T>&);                                              \
  template Var<T> reshape(const Var<T>&, std::vector<std::size_t>);                            \
  template Var<T> scale_channels(const Var<T>&, const Var<T>&);                                \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                         \
  template Var<T> channel_mix(const Var<T>&, const Var<T>&);                                   \
  template Var<T> softmax_branches(const Var<T>&);                                             \
  template Var<T> weighted_sum(std::span<const Var<T>>, const Var<T>&);                        \
  template Var<T> dynamic_conv(const Var<T>&, const Var<T>&, std::size_t);                     \
  template Var<T> depthwise_dynamic_conv(const Var<T>&, const Var<T>&, std::size_t);           \
  template Var<T> masked_sum_squares(const Var<T>&, const Tensor<T>&,                          \
                                     std::span<const std::uint8_t>, T);                        \
  template Var<T> masked_mse(const Var<T>&, const Tensor<T>&, std::span<const std::uint8_t>);  \
  template Var<T> weighted_total(const Var<T>&, const Tensor<T>&);

RIG_INSTANTIATE_AUTOGRAD(float)
RIG_INSTANTIATE_AUTOGRAD(double)

#undef RIG_INSTANTIATE_AUTOGRAD

}  // namespace rig::nn
