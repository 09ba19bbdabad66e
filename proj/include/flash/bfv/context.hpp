#pragma once

#include <memory>
#include <vector>

#include "flash/ring/params.hpp"
#include "flash/ring/poly.hpp"

namespace flash {

// Shared, immutable scheme context: parameters, both rings, slot layout.
class Context {
 public:
  static std::shared_ptr<const Context> create(const RingParams& params);

  const RingParams& params() const { return params_; }
  const Ring& q_ring() const { return q_ring_; }
  const Ring& p_ring() const { return p_ring_; }
  u64 n() const { return params_.n; }
  u64 q() const { return params_.q; }
  u64 p() const { return params_.p; }
  u64 delta() const { return delta_; }
  u64 row_size() const { return params_.n / 2; }

  // Batch slot k = row * (n/2) + col is the evaluation at psi^(+-3^col);
  // this is its index in the plaintext-ring transform.
  const std::vector<u32>& slot_to_eval() const { return slot_to_eval_; }

 private:
  explicit Context(const RingParams& params);

  RingParams params_;
  Ring q_ring_;
  Ring p_ring_;
  u64 delta_;
  std::vector<u32> slot_to_eval_;
};

using ContextPtr = std::shared_ptr<const Context>;

}  // namespace flash
