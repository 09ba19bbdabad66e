#pragma once

#include <bit>

#include "flash/common.hpp"

namespace flash {

// Word-sized modulus below 2^62 with Barrett constants.
class Modulus {
 public:
  Modulus() = default;
  explicit Modulus(u64 value);

  u64 value() const { return value_; }
  int bits() const { return std::bit_width(value_); }

  u64 reduce(u64 x) const {
    u64 qhat = static_cast<u64>((static_cast<u128>(x) * ratio_hi_) >> 64);
    u64 r = x - qhat * value_;
    return r >= value_ ? r - value_ : r;
  }

  // Any 128-bit input.
  u64 reduce128(u128 x) const {
    u64 x0 = static_cast<u64>(x);
    u64 x1 = static_cast<u64>(x >> 64);
    u64 carry = static_cast<u64>((static_cast<u128>(x0) * ratio_lo_) >> 64);
    u128 t = static_cast<u128>(x0) * ratio_hi_;
    u128 s = static_cast<u128>(static_cast<u64>(t)) + carry;
    u64 mid = static_cast<u64>(s);
    u64 top = static_cast<u64>(t >> 64) + static_cast<u64>(s >> 64);
    u128 t2 = static_cast<u128>(x1) * ratio_lo_;
    u128 s2 = static_cast<u128>(mid) + static_cast<u64>(t2);
    carry = static_cast<u64>(t2 >> 64) + static_cast<u64>(s2 >> 64);
    u64 qhat = x1 * ratio_hi_ + top + carry;
    u64 r = x0 - qhat * value_;
    while (r >= value_) r -= value_;
    return r;
  }

  u64 mul(u64 a, u64 b) const {
    return reduce128(static_cast<u128>(a) * b);
  }
  u64 add(u64 a, u64 b) const {
    u64 s = a + b;
    return s >= value_ ? s - value_ : s;
  }
  u64 sub(u64 a, u64 b) const { return a >= b ? a - b : a + value_ - b; }
  u64 neg(u64 a) const { return a == 0 ? 0 : value_ - a; }

  // Signed value into [0, q).
  u64 from_signed(i64 x) const {
    i64 r = x % static_cast<i64>(value_);
    return static_cast<u64>(r < 0 ? r + static_cast<i64>(value_) : r);
  }
  // Centered representative in (-q/2, q/2].
  i64 to_signed(u64 x) const {
    return x > (value_ >> 1) ? static_cast<i64>(x) - static_cast<i64>(value_)
                             : static_cast<i64>(x);
  }

  u64 pow(u64 base, u64 exp) const;
  u64 inv(u64 a) const;

  // floor(w * 2^64 / q), for multiplication by a fixed operand.
  u64 shoup(u64 w) const {
    return static_cast<u64>((static_cast<u128>(w) << 64) / value_);
  }

  friend bool operator==(const Modulus& a, const Modulus& b) {
    return a.value_ == b.value_;
  }

 private:
  u64 value_ = 0;
  u64 ratio_lo_ = 0;  // floor(2^128 / q) split in two words
  u64 ratio_hi_ = 0;
};

// a * w mod q in [0, 2q) given wp = shoup(w).
inline u64 mul_shoup_lazy(u64 a, u64 w, u64 wp, u64 q) {
  u64 hi = static_cast<u64>((static_cast<u128>(a) * wp) >> 64);
  return a * w - hi * q;
}

inline u64 mul_shoup(u64 a, u64 w, u64 wp, u64 q) {
  u64 r = mul_shoup_lazy(a, w, wp, q);
  return r >= q ? r - q : r;
}

bool is_prime(u64 n);

}  // namespace flash
