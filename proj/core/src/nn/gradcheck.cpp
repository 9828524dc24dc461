#include "rig/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rig/nn/random.hpp"

namespace rig::nn {

GradReport check_gradients(const std::string& op, const std::function<Var<double>()>& forward,
                           std::vector<Var<double>> leaves, double eps, std::uint64_t seed) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw std::invalid_argument("check_gradients: eps must lie in [1e-7, 1e-4]");
  }
  GradReport report;
  report.op = op;

  const Var<double> probe = forward();
  Tensor<double> projection(probe.value().dims());
  Rng rng(seed);
  for (double& v : projection.storage()) v = rng.uniform(-1.0, 1.0);
  auto objective = [&]() { return weighted_total(forward(), projection).value()[0]; };

  for (auto& leaf : leaves) leaf.zero_grad();
  backward(weighted_total(probe, projection));

  for (auto& leaf : leaves) {
    const Tensor<double> analytic =
        leaf.grad().empty() ? Tensor<double>(leaf.value().dims()) : leaf.grad();
    if (!analytic.all_finite()) {
      report.analytic_finite = false;
      report.max_rel_error = std::numeric_limits<double>::infinity();
      continue;
    }
    Tensor<double>& value = leaf.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = objective();
      value[i] = saved - eps;
      const double down = objective();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.elements_checked;
    }
  }
  return report;
}

}  // namespace rig::nn
