#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rig/memcost.hpp"
#include "rig/nn/random.hpp"

using namespace rig::memcost;

namespace {

// a/b == c/d over 128-bit cross products.
bool same_ratio(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return static_cast<unsigned __int128>(a) * d == static_cast<unsigned __int128>(c) * b;
}

}  // namespace

TEST(MemCost, TableOnePoint) {
  const MemCostReport r = cost(128, 128, 608, 3);
  EXPECT_EQ(r.bytes_dc, 45902462976ull);
  EXPECT_EQ(r.bytes_cf, 4u * (128ull * 9 * 128 * 608 + 128 * 128));
  EXPECT_EQ(r.bytes_eg, 4u * (128ull * 128 * 608 + 128 * 128));
  EXPECT_EQ(MemCostReport::gib(r.bytes_dc), 42.75);
  EXPECT_NEAR(MemCostReport::gib(r.bytes_cf), 0.334, 0.0005);
  EXPECT_NEAR(MemCostReport::gib(r.bytes_eg), 0.037, 0.0005);
  const double cf_over_eg = static_cast<double>(r.bytes_cf) / static_cast<double>(r.bytes_eg);
  EXPECT_NEAR(cf_over_eg, 8.99, 0.005);
  const double dc_over_eg = static_cast<double>(r.bytes_dc) / static_cast<double>(r.bytes_eg);
  EXPECT_GE(dc_over_eg, 1150.0);
  EXPECT_LE(dc_over_eg, 1156.0);
}

TEST(MemCost, RatiosAreReducedByteQuotients) {
  const MemCostReport r = cost(128, 128, 608, 3);
  EXPECT_TRUE(same_ratio(r.ratio_eg_dc.num, r.ratio_eg_dc.den, r.bytes_eg, r.bytes_dc));
  EXPECT_EQ(std::gcd(r.ratio_eg_dc.num, r.ratio_eg_dc.den), 1u);
  EXPECT_TRUE(same_ratio(r.ratio_eg_cf.num, r.ratio_eg_cf.den, r.bytes_eg, r.bytes_cf));
}

TEST(MemCost, DegenerateSingleChannelWindow) {
  const MemCostReport r = cost(1, 7, 9, 1);
  EXPECT_LE(r.bytes_cf - r.bytes_dc, 4u);
  EXPECT_LE(r.bytes_eg - r.bytes_dc, 4u);
  // ratio_eg_dc * C * R^2 >= 1
  EXPECT_GE(r.ratio_eg_dc.num, r.ratio_eg_dc.den);
}

TEST(MemCost, IdentitiesOnRandomGrid) {
  rig::nn::Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t C = 1 + rng.below(256), H = 1 + rng.below(512), W = 1 + rng.below(1024),
                        R = 1 + rng.below(7);
    const MemCostReport r = cost(C, H, W, R);
    // eg/dc == 1/(C R^2) + 1/(H W R^2) == (H W + C) / (C H W R^2)
    EXPECT_TRUE(same_ratio(r.ratio_eg_dc.num, r.ratio_eg_dc.den, H * W + C, C * H * W * R * R));
    // eg/cf == (H W + C) / (H W R^2 + C)
    EXPECT_TRUE(same_ratio(r.ratio_eg_cf.num, r.ratio_eg_cf.den, H * W + C, H * W * R * R + C));
    if (C >= 2 && R >= 2) {
      EXPECT_LE(r.bytes_eg, r.bytes_cf);
      EXPECT_LE(r.bytes_cf, r.bytes_dc);
    }
  }
}

TEST(MemCost, MonotoneInEveryArgument) {
  rig::nn::Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Shape s{1 + rng.below(64), 1 + rng.below(64), 1 + rng.below(64), 1 + rng.below(5), 4};
    const MemCostReport base = cost(s);
    for (int arg = 0; arg < 4; ++arg) {
      Shape t = s;
      (arg == 0 ? t.C : arg == 1 ? t.H : arg == 2 ? t.W : t.R) += 1;
      const MemCostReport bumped = cost(t);
      EXPECT_GE(bumped.bytes_dc, base.bytes_dc);
      EXPECT_GE(bumped.bytes_cf, base.bytes_cf);
      EXPECT_GE(bumped.bytes_eg, base.bytes_eg);
    }
  }
}

TEST(MemCost, RejectsZeroAndOverflow) {
  EXPECT_THROW(cost(0, 1, 1, 1), std::invalid_argument);
  EXPECT_THROW(cost(1, 1, 1, 1, 0), std::invalid_argument);
  EXPECT_THROW(cost(1ull << 20, 1ull << 20, 1ull << 20, 3), std::overflow_error);
}

TEST(Sweep, SinglePointEqualsCost) {
  const auto rows = sweep({Shape{128, 128, 608, 3, 4}});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(csv_row(rows[0]), csv_row(cost(128, 128, 608, 3)));
  EXPECT_THROW(sweep({}), std::invalid_argument);
}

TEST(Sweep, GridIsStrictlyIncreasing) {
  std::vector<Shape> grid;
  for (std::uint64_t C : {64, 128}) {
    for (std::uint64_t R : {3, 5}) grid.push_back(Shape{C, 32, 32, R, 4});
  }
  const auto rows = sweep(grid);
  ASSERT_EQ(rows.size(), 4u);
  // (64,3) < (64,5) and (64,3) < (128,3), and so on.
  EXPECT_LT(rows[0].bytes_dc, rows[1].bytes_dc);
  EXPECT_LT(rows[0].bytes_cf, rows[1].bytes_cf);
  EXPECT_LT(rows[0].bytes_dc, rows[2].bytes_dc);
  EXPECT_LT(rows[0].bytes_eg, rows[2].bytes_eg);
  EXPECT_LT(rows[2].bytes_cf, rows[3].bytes_cf);
  EXPECT_LT(rows[1].bytes_dc, rows[3].bytes_dc);
}

TEST(Csv, HeaderAndRowFormat) {
  EXPECT_EQ(csv_header(), "C,H,W,R,elem_bytes,bytes_dc,bytes_cf,bytes_eg,ratio_eg_dc,ratio_eg_cf");
  const std::string row = csv_row(cost(128, 128, 608, 3));
  EXPECT_EQ(row.rfind("128,128,608,3,4,45902462976,", 0), 0u) << row;
  EXPECT_NE(row.find(",0.000869483,"), std::string::npos) << row;
  EXPECT_NE(row.find(",0.111274"), std::string::npos) << row;
}

TEST(Significant, RoundsToDigits) {
  EXPECT_EQ(significant(0.0371704, 3), "0.0372");
  EXPECT_EQ(significant(42.75, 4), "42.75");
  EXPECT_EQ(significant(1150.07, 3), "1150");
}
