#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rig/nn/autograd.hpp"

namespace rig::nn {

struct GradReport {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t elements_checked = 0;
  bool analytic_finite = true;

  bool passed(double tolerance) const {
    return analytic_finite && max_rel_error < tolerance;
  }
};

/// Compares reverse-mode gradients of a random projection of `forward()`
/// against central differences, perturbing every element of every leaf in
/// place. `forward` must read the leaves it is given. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
GradReport check_gradients(const std::string& op, const std::function<Var<double>()>& forward,
                           std::vector<Var<double>> leaves, double eps,
                           std::uint64_t seed = 0x5eed);

}  // namespace rig::nn
