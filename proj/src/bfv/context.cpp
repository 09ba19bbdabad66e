#include "flash/bfv/context.hpp"

namespace flash {

std::shared_ptr<const Context> Context::create(const RingParams& params) {
  params.validate();
  return std::shared_ptr<const Context>(new Context(params));
}

Context::Context(const RingParams& params)
    : params_(params),
      q_ring_(params.n, params.q),
      p_ring_(params.n, params.p),
      delta_(params.q / params.p) {
  const u64 n = params.n;
  const u64 half = n / 2;
  slot_to_eval_.resize(n);
  u64 e = 1;
  for (u64 col = 0; col < half; ++col) {
    slot_to_eval_[col] = static_cast<u32>(p_ring_.eval_index(e));
    slot_to_eval_[half + col] = static_cast<u32>(p_ring_.eval_index(2 * n - e));
    e = (e * 3) % (2 * n);
  }
}

}  // namespace flash
