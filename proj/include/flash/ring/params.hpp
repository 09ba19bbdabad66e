#pragma once

#include <string>

#include "flash/common.hpp"

namespace flash {

struct RingParams {
  u64 n = 2048;
  u64 q = 0;
  u64 p = 0;
  double sigma = 3.2;
  int decomp_log = 16;  // T, digit base 2^T for key switching

  u64 delta() const { return q / p; }
  int decomp_count() const;  // l = ceil(bits(q) / T)
  int log_n() const;
  // Binomial parameter eta with variance eta / 2 closest to sigma^2.
  int cbd_eta() const;

  void validate() const;

  friend bool operator==(const RingParams&, const RingParams&) = default;
};

// Defaults pinned in params/default.json.
RingParams default_params();

// Smallest prime >= lower with prime == 1 mod step.
u64 find_prime_above(u64 lower, u64 step);
// Largest prime < 2^bits with prime == 1 mod step.
u64 find_prime_below_pow2(int bits, u64 step);

// Prime search documented in the README: p is the smallest prime >= 2^p_bits
// with p == 1 mod 2n; q is the largest prime below 2^q_bits with
// q == 1 mod 2n*p, so that q mod p == 1 as well.
RingParams search_params(u64 n, int q_bits, int p_bits, double sigma,
                         int decomp_log);

RingParams load_params(const std::string& path);
void save_params(const RingParams& params, const std::string& path);
std::string params_to_json(const RingParams& params);
RingParams params_from_json(const std::string& text);

}  // namespace flash
