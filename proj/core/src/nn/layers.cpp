#include "rig/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "rig/nn/random.hpp"

namespace rig::nn {

template <class T>
Var<T> ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (find(name) != nullptr) throw std::logic_error("duplicate parameter name: " + name);
  Var<T> v = Var<T>::leaf(std::move(value));
  entries_.push_back({name, v});
  return v;
}

template <class T>
Var<T> ParameterSet<T>::create_uniform(const std::string& name, std::vector<std::size_t> dims,
                                       double bound) {
  Tensor<T> t(std::move(dims));
  Rng rng(derive_seed(seed_, name));
  for (T& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, std::move(t));
}

template <class T>
Var<T> ParameterSet<T>::create_constant(const std::string& name, std::vector<std::size_t> dims,
                                        T value) {
  return add(name, Tensor<T>(std::move(dims), value));
}

template <class T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

template <class T>
void ParameterSet<T>::zero_values() {
  for (auto& e : entries_) e.var.mutable_value().fill(T(0));
}

template <class T>
std::uint64_t ParameterSet<T>::checksum() const {
  std::uint64_t h = fnv1a64("params");
  for (const auto& e : entries_) {
    h = fnv1a64(e.name.data(), e.name.size(), h);
    const auto& dims = e.var.value().dims();
    h = fnv1a64(dims.data(), dims.size() * sizeof(std::size_t), h);
    h = fnv1a64(e.var.value().data(), e.var.value().size() * sizeof(T), h);
  }
  return h;
}

template <class T>
const typename ParameterSet<T>::Entry* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <class T>
Conv2d<T>::Conv2d(ParameterSet<T>& params, const std::string& name, std::size_t in,
                  std::size_t out, std::size_t win, std::size_t stride, bool with_bias,
                  double gain)
    : geometry{stride, (win - 1) / 2}, in_channels(in), out_channels(out), window(win) {
  if (win % 2 == 0) throw std::invalid_argument("Conv2d: window must be odd for same padding");
  const double fan_in = static_cast<double>(in * win * win);
  weight = params.create_uniform(name + ".weight", {out, in, win, win},
                                 gain * std::sqrt(6.0 / fan_in));
  if (with_bias) bias = params.create_constant(name + ".bias", {out}, T(0));
}

template <class T>
Var<T> Conv2d<T>::operator()(const Var<T>& x) const {
  return conv2d(x, weight, bias, geometry);
}

template <class T>
Deconv2d<T>::Deconv2d(ParameterSet<T>& params, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias, double gain) {
  // Each output pixel of a stride-2 3x3 transposed conv sees about in * 9 / 4 taps.
  const double fan_in = static_cast<double>(in) * 9.0 / 4.0;
  weight = params.create_uniform(name + ".weight", {in, out, 3, 3},
                                 gain * std::sqrt(6.0 / fan_in));
  if (with_bias) bias = params.create_constant(name + ".bias", {out}, T(0));
}

template <class T>
Var<T> Deconv2d<T>::operator()(const Var<T>& x) const {
  return deconv2d(x, weight, bias, geometry);
}

template <class T>
Linear<T>::Linear(ParameterSet<T>& params, const std::string& name, std::size_t in,
                  std::size_t out, bool with_bias, double gain) {
  weight = params.create_uniform(name + ".weight", {out, in},
                                 gain * std::sqrt(3.0 / static_cast<double>(in)));
  if (with_bias) bias = params.create_constant(name + ".bias", {out}, T(0));
}

template <class T>
Var<T> Linear<T>::operator()(const Var<T>& v) const {
  return linear(v, weight, bias);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Deconv2d<float>;
template class Deconv2d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace rig::nn
