#pragma once

#include "flash/common.hpp"

namespace flash {

// Per-thread operation counters. Poly-level granularity.
struct OpCounters {
  u64 rng_bytes = 0;
  u64 ntt_calls = 0;
  u64 modmul_coeffs = 0;    // coefficients passed through a modular multiply
  u64 monomial_moves = 0;   // coefficients moved by monomial_mul
};

OpCounters& op_counters();
inline void reset_op_counters() { op_counters() = OpCounters{}; }

}  // namespace flash
