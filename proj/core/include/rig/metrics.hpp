#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace rig::metrics {

/// Depths in, meters. rmse/mae in millimeters, irmse/imae in 1/km, deltas in percent.
struct MetricReport {
  double rmse = 0, mae = 0, irmse = 0, imae = 0, rel = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  std::size_t pixels = 0;    // masked pixels used by rmse/mae
  std::size_t excluded = 0;  // masked pixels skipped by ratio and inverse metrics (p <= 0 or g <= 0)
};

/// Raised when ground truth exceeds the sanity bound, which usually means a
/// millimeter map was passed where meters were expected.
class UnitMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalOptions {
  double max_depth = 1000.0;  // meters
};

/// Throws std::invalid_argument on size mismatch or an empty mask.
MetricReport evaluate(std::span<const float> pred, std::span<const float> gt,
                      std::span<const std::uint8_t> mask, const EvalOptions& opts = {});

/// Running sums for dataset-level metrics over many maps.
class Accumulator {
 public:
  void add(std::span<const float> pred, std::span<const float> gt,
           std::span<const std::uint8_t> mask, const EvalOptions& opts = {});
  MetricReport report() const;
  std::size_t pixels() const noexcept { return n_; }

 private:
  std::size_t n_ = 0, n_ratio_ = 0, excluded_ = 0;
  double se_ = 0, ae_ = 0, ise_ = 0, iae_ = 0, rel_ = 0;
  std::size_t d1_ = 0, d2_ = 0, d3_ = 0;
};

std::string csv_header();  // rmse,mae,irmse,imae,rel,delta1,delta2,delta3
std::string csv_row(const MetricReport& r);

}  // namespace rig::metrics
