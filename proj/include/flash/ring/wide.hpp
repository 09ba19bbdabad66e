#pragma once

#include <vector>

#include "flash/common.hpp"
#include "flash/ring/poly.hpp"

namespace flash {

// Lazy-reduction accumulator. Each coefficient is held as hi * 2^31 + lo in
// two signed 64-bit words; inputs are split into a 31-bit low limb and the
// remaining high limb, so every product fits a 32x32 -> 64 multiply.
// Exact as long as the running sum of |scalar| stays within kWeightBudget.
struct WidePoly {
  static constexpr int kLimbBits = 31;
  static constexpr u64 kLimbMask = (u64{1} << kLimbBits) - 1;
  static constexpr u64 kWeightBudget = u64{1} << 32;

  std::vector<i64> lo, hi;
  u64 modulus = 0;
  u64 weight_sum = 0;

  WidePoly() = default;
  WidePoly(std::size_t n, u64 mod) : lo(n, 0), hi(n, 0), modulus(mod) {}
  std::size_t size() const { return lo.size(); }
};

// Throws OverflowError when adding |scalar| would exceed the budget.
void wide_reserve(WidePoly& acc, i64 scalar);

// acc += scalar * f.
void wide_accumulate(WidePoly& acc, const ModPoly& f, i64 scalar);
// acc += scalar * f * x^(-shift): the monomial product is folded in.
void wide_accumulate_shifted(WidePoly& acc, const ModPoly& f, i64 shift,
                             i64 scalar);

ModPoly finalize(const WidePoly& acc);
// Raw-array form used by the convolution kernels.
void finalize_limbs(const i64* lo, const i64* hi, std::size_t n,
                    const Modulus& mod, u64* out);

}  // namespace flash
