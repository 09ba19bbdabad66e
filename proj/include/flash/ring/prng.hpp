#pragma once

#include <array>
#include <limits>
#include <span>
#include <vector>

#include "flash/common.hpp"
#include "flash/ring/poly.hpp"

namespace flash {

// ChaCha20 keystream generator. Also a UniformRandomBitGenerator.
class Prng {
 public:
  using Seed = std::array<u8, 32>;
  using result_type = u64;

  explicit Prng(const Seed& seed);
  static Prng from_u64(u64 seed);
  static Prng from_os();

  void fill(std::span<u8> out);
  u64 next_u64();
  // Uniform in [0, bound), rejection sampled.
  u64 uniform(u64 bound);
  Seed next_seed();

  static constexpr u64 min() { return 0; }
  static constexpr u64 max() { return std::numeric_limits<u64>::max(); }
  u64 operator()() { return next_u64(); }

 private:
  void refill();

  Seed key_;
  u64 counter_ = 0;
  std::array<u8, 4096> buf_{};
  std::size_t pos_ = 4096;
};

// Uniform polynomial with coefficients in [0, q).
ModPoly sample_uniform(Prng& prng, u64 n, u64 q);
// Deterministic expansion of a 32-byte seed into a uniform polynomial.
ModPoly expand_seed(const Prng::Seed& seed, u64 n, u64 q);
// Coefficients uniform in {-1, 0, 1}, stored mod q.
ModPoly sample_ternary(Prng& prng, u64 n, u64 q);
// Centered binomial with parameter eta (variance eta / 2), stored mod q.
ModPoly sample_cbd(Prng& prng, u64 n, u64 q, int eta);

}  // namespace flash
