#include "rig/memcost.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rig::memcost {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw std::overflow_error("memcost: byte count overflows 64 bits");
  }
  return a * b;
}

std::uint64_t plus(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a) {
    throw std::overflow_error("memcost: byte count overflows 64 bits");
  }
  return a + b;
}

}  // namespace

Ratio Ratio::of(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw std::invalid_argument("ratio: zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Ratio{0, 1} : Ratio{num / g, den / g};
}

double MemCostReport::gib(std::uint64_t bytes) noexcept {
  return static_cast<double>(bytes) / static_cast<double>(std::uint64_t{1} << 30);
}

MemCostReport cost(std::uint64_t C, std::uint64_t H, std::uint64_t W, std::uint64_t R,
                   std::uint64_t elem_bytes) {
  if (C == 0 || H == 0 || W == 0 || R == 0 || elem_bytes == 0) {
    throw std::invalid_argument("memcost: C, H, W, R and elem_bytes must all be >= 1");
  }
  MemCostReport r;
  r.shape = {C, H, W, R, elem_bytes};
  const std::uint64_t hw = mul(H, W);
  const std::uint64_t rr = mul(R, R);
  const std::uint64_t cc = mul(C, C);
  r.bytes_dc = mul(mul(mul(cc, rr), hw), elem_bytes);
  r.bytes_cf = mul(plus(mul(mul(C, rr), hw), cc), elem_bytes);
  r.bytes_eg = mul(plus(mul(C, hw), cc), elem_bytes);
  r.ratio_eg_dc = Ratio::of(r.bytes_eg, r.bytes_dc);
  r.ratio_eg_cf = Ratio::of(r.bytes_eg, r.bytes_cf);
  return r;
}

MemCostReport cost(const Shape& s) { return cost(s.C, s.H, s.W, s.R, s.elem_bytes); }

std::vector<MemCostReport> sweep(const std::vector<Shape>& grid) {
  if (grid.empty()) throw std::invalid_argument("memcost sweep: empty grid");
  std::vector<MemCostReport> out;
  out.reserve(grid.size());
  for (const Shape& s : grid) out.push_back(cost(s));
  return out;
}

std::string significant(double x, int digits) {
  if (x == 0.0 || !std::isfinite(x)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
  }
  const int magnitude = static_cast<int>(std::floor(std::log10(std::fabs(x))));
  const int decimals = std::max(0, digits - 1 - magnitude);
  const double scale = std::pow(10.0, digits - 1 - magnitude);
  const double rounded = std::round(x * scale) / scale;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
  return buf;
}

std::string csv_header() {
  return "C,H,W,R,elem_bytes,bytes_dc,bytes_cf,bytes_eg,ratio_eg_dc,ratio_eg_cf";
}

std::string csv_row(const MemCostReport& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", r.ratio_eg_dc.value());
  std::string dc = buf;
  std::snprintf(buf, sizeof buf, "%.6g", r.ratio_eg_cf.value());
  std::string cf = buf;
  const Shape& s = r.shape;
  return std::to_string(s.C) + "," + std::to_string(s.H) + "," + std::to_string(s.W) + "," +
         std::to_string(s.R) + "," + std::to_string(s.elem_bytes) + "," +
         std::to_string(r.bytes_dc) + "," + std::to_string(r.bytes_cf) + "," +
         std::to_string(r.bytes_eg) + "," + dc + "," + cf;
}

std::string to_csv(const std::vector<MemCostReport>& rows) {
  std::string out = csv_header() + "\n";
  for (const auto& r : rows) out += csv_row(r) + "\n";
  return out;
}

}  // namespace rig::memcost
