#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Activation memory of the three guidance variants, in exact integer bytes.
namespace rig::memcost {

/// Non-negative fraction kept in lowest terms.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Ratio of(std::uint64_t num, std::uint64_t den);
  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct Shape {
  std::uint64_t C = 0, H = 0, W = 0, R = 0;
  std::uint64_t elem_bytes = 4;
};

struct MemCostReport {
  Shape shape;
  std::uint64_t bytes_dc = 0;  // C*C*R^2*H*W
  std::uint64_t bytes_cf = 0;  // C*R^2*H*W + C*C
  std::uint64_t bytes_eg = 0;  // C*H*W + C*C
  Ratio ratio_eg_dc;
  Ratio ratio_eg_cf;

  /// Bytes / 2^30.
  static double gib(std::uint64_t bytes) noexcept;
};

/// Throws std::invalid_argument on zero arguments or std::overflow_error when
/// a byte count does not fit in 64 bits.
MemCostReport cost(std::uint64_t C, std::uint64_t H, std::uint64_t W, std::uint64_t R,
                   std::uint64_t elem_bytes = 4);
MemCostReport cost(const Shape& s);

/// One report per grid point, in order. Throws on an empty grid.
std::vector<MemCostReport> sweep(const std::vector<Shape>& grid);

/// `C,H,W,R,elem_bytes,bytes_dc,bytes_cf,bytes_eg,ratio_eg_dc,ratio_eg_cf`
std::string csv_header();
/// Ratios printed with 6 significant digits.
std::string csv_row(const MemCostReport& r);
std::string to_csv(const std::vector<MemCostReport>& rows);

/// `x` rounded to `digits` significant digits, in plain notation.
std::string significant(double x, int digits);

}  // namespace rig::memcost
