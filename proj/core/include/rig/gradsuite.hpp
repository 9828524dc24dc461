#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rig/nn/gradcheck.hpp"

namespace rig::gradsuite {

struct Options {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double eps = 1e-5;
  double tolerance = 1e-4;
  /// Restrict to these op names; empty runs everything.
  std::vector<std::string> only;
};

/// Names of every differentiable operation covered by the suite.
std::vector<std::string> operations();

/// One report per (operation, seed). Each seed draws its own shapes, all
/// within 4 x 4 x 8 x 8, and its own parameter values.
std::vector<nn::GradReport> run(const Options& opts = {});

}  // namespace rig::gradsuite
