#include "rig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace rig::metrics {

void Accumulator::add(std::span<const float> pred, std::span<const float> gt,
                      std::span<const std::uint8_t> mask, const EvalOptions& opts) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) {
    throw std::invalid_argument("evaluate: pred, gt and mask sizes differ");
  }
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const double p = pred[i], g = gt[i];
    if (!std::isfinite(p) || !std::isfinite(g)) {
      throw std::invalid_argument("evaluate: non-finite depth at masked pixel " + std::to_string(i));
    }
    if (g > opts.max_depth) {
      throw UnitMismatchError("evaluate: ground truth " + std::to_string(g) +
                              " exceeds the " + std::to_string(opts.max_depth) +
                              " m sanity bound; depths must be in meters");
    }
    const double e = p - g;
    se_ += e * e;
    ae_ += std::fabs(e);
    ++n_;
    if (p <= 0.0 || g <= 0.0) {
      ++excluded_;
      continue;
    }
    // 1/m -> 1/km
    const double ie = 1000.0 / p - 1000.0 / g;
    ise_ += ie * ie;
    iae_ += std::fabs(ie);
    rel_ += std::fabs(e) / g;
    const double ratio = std::max(p / g, g / p);
    if (ratio < t1) ++d1_;
    if (ratio < t2) ++d2_;
    if (ratio < t3) ++d3_;
    ++n_ratio_;
  }
}

MetricReport Accumulator::report() const {
  if (n_ == 0) throw std::invalid_argument("evaluate: empty mask");
  MetricReport r;
  const double n = static_cast<double>(n_);
  r.rmse = 1000.0 * std::sqrt(se_ / n);
  r.mae = 1000.0 * ae_ / n;
  if (n_ratio_ > 0) {
    const double m = static_cast<double>(n_ratio_);
    r.irmse = std::sqrt(ise_ / m);
    r.imae = iae_ / m;
    r.rel = rel_ / m;
    r.delta1 = 100.0 * static_cast<double>(d1_) / m;
    r.delta2 = 100.0 * static_cast<double>(d2_) / m;
    r.delta3 = 100.0 * static_cast<double>(d3_) / m;
  }
  r.pixels = n_;
  r.excluded = excluded_;
  return r;
}

MetricReport evaluate(std::span<const float> pred, std::span<const float> gt,
                      std::span<const std::uint8_t> mask, const EvalOptions& opts) {
  Accumulator acc;
  acc.add(pred, gt, mask, opts);
  return acc.report();
}

std::string csv_header() { return "rmse,mae,irmse,imae,rel,delta1,delta2,delta3"; }

std::string csv_row(const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.8f,%.4f,%.4f,%.4f", r.rmse, r.mae, r.irmse,
                r.imae, r.rel, r.delta1, r.delta2, r.delta3);
  return buf;
}

}  // namespace rig::metrics
