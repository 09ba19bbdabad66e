#include "flash/ring/modulus.hpp"

#include <array>

namespace flash {

Modulus::Modulus(u64 value) : value_(value) {
  if (value < 2 || value >= (u64{1} << 62)) {
    throw ParameterError("modulus out of range: " + std::to_string(value));
  }
  // floor((2^128 - 1) / q) equals floor(2^128 / q) unless q is a power of two.
  u128 ratio = ~static_cast<u128>(0) / value;
  if ((value & (value - 1)) == 0) ratio += 1;
  ratio_lo_ = static_cast<u64>(ratio);
  ratio_hi_ = static_cast<u64>(ratio >> 64);
}

u64 Modulus::pow(u64 base, u64 exp) const {
  u64 result = 1 % value_;
  base = reduce(base);
  while (exp) {
    if (exp & 1) result = mul(result, base);
    base = mul(base, base);
    exp >>= 1;
  }
  return result;
}

u64 Modulus::inv(u64 a) const {
  i128 t = 0, new_t = 1;
  i128 r = value_, new_r = reduce(a);
  while (new_r != 0) {
    i128 quotient = r / new_r;
    i128 tmp = t - quotient * new_t;
    t = new_t;
    new_t = tmp;
    tmp = r - quotient * new_r;
    r = new_r;
    new_r = tmp;
  }
  if (r != 1) throw ParameterError("value not invertible");
  if (t < 0) t += value_;
  return static_cast<u64>(t);
}

namespace {

u64 mulmod(u64 a, u64 b, u64 m) {
  return static_cast<u64>(static_cast<u128>(a) * b % m);
}

u64 powmod(u64 b, u64 e, u64 m) {
  u64 r = 1 % m;
  while (e) {
    if (e & 1) r = mulmod(r, b, m);
    b = mulmod(b, b, m);
    e >>= 1;
  }
  return r;
}

}  // namespace

// Deterministic Miller-Rabin for 64-bit inputs.
bool is_prime(u64 n) {
  if (n < 2) return false;
  constexpr std::array<u64, 12> kBases = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (u64 b : kBases) {
    if (n % b == 0) return n == b;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : kBases) {
    u64 x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < s; ++i) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

}  // namespace flash
