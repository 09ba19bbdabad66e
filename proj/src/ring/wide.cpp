#include "flash/ring/wide.hpp"

#include <bit>
#include <cstdlib>

namespace flash {

void wide_reserve(WidePoly& acc, i64 scalar) {
  u64 mag = static_cast<u64>(scalar < 0 ? -scalar : scalar);
  if (mag > WidePoly::kWeightBudget ||
      acc.weight_sum > WidePoly::kWeightBudget - mag) {
    throw OverflowError("lazy accumulation budget exceeded");
  }
  acc.weight_sum += mag;
}

namespace {

void check_input(const WidePoly& acc, const ModPoly& f) {
  if (f.size() != acc.size() || f.modulus != acc.modulus) {
    throw UsageError("accumulator and polynomial do not match");
  }
  if (std::bit_width(f.modulus) > 61) {
    throw UsageError("modulus too wide for lazy accumulation");
  }
}

void accumulate_range(i64* lo, i64* hi, const u64* src, std::size_t count,
                      i64 scalar) {
  for (std::size_t i = 0; i < count; ++i) {
    u64 c = src[i];
    lo[i] += scalar * static_cast<i64>(c & WidePoly::kLimbMask);
    hi[i] += scalar * static_cast<i64>(c >> WidePoly::kLimbBits);
  }
}

}  // namespace

void wide_accumulate(WidePoly& acc, const ModPoly& f, i64 scalar) {
  check_input(acc, f);
  wide_reserve(acc, scalar);
  accumulate_range(acc.lo.data(), acc.hi.data(), f.coeffs.data(), f.size(),
                   scalar);
}

void wide_accumulate_shifted(WidePoly& acc, const ModPoly& f, i64 shift,
                             i64 scalar) {
  check_input(acc, f);
  if (f.domain != Domain::kCoefficient) {
    throw UsageError("shifted accumulation expects coefficient domain");
  }
  wide_reserve(acc, scalar);
  const std::size_t n = f.size();
  const i64 two_n = static_cast<i64>(2 * n);
  i64 s = shift % two_n;
  if (s < 0) s += two_n;
  if (static_cast<std::size_t>(s) >= n) {
    s -= static_cast<i64>(n);
    scalar = -scalar;
  }
  const std::size_t k = static_cast<std::size_t>(s);
  accumulate_range(acc.lo.data(), acc.hi.data(), f.coeffs.data() + k, n - k,
                   scalar);
  accumulate_range(acc.lo.data() + (n - k), acc.hi.data() + (n - k),
                   f.coeffs.data(), k, -scalar);
}

void finalize_limbs(const i64* lo, const i64* hi, std::size_t n,
                    const Modulus& mod, u64* out) {
  // |value| < 2^94; shift by a multiple of q to make it nonnegative.
  const u128 q = mod.value();
  const u128 offset = ((static_cast<u128>(1) << 94) / q + 1) * q;
  for (std::size_t i = 0; i < n; ++i) {
    i128 v = (static_cast<i128>(hi[i]) << WidePoly::kLimbBits) + lo[i];
    out[i] = mod.reduce128(static_cast<u128>(v + static_cast<i128>(offset)));
  }
}

ModPoly finalize(const WidePoly& acc) {
  Modulus mod(acc.modulus);
  ModPoly out(acc.size(), acc.modulus, Domain::kCoefficient);
  finalize_limbs(acc.lo.data(), acc.hi.data(), acc.size(), mod,
                 out.coeffs.data());
  return out;
}

}  // namespace flash
