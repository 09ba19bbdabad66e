#include "flash/bfv/encoding.hpp"

namespace flash {

const char* encoding_name(Encoding e) {
  return e == Encoding::kBatch ? "batch" : "direct";
}

namespace {

void check_message(const Context& ctx, const MessageVec& m) {
  if (m.size() != ctx.n()) {
    throw UsageError("message must have exactly n slots");
  }
  for (u64 v : m) {
    if (v >= ctx.p()) throw UsageError("message value not reduced mod p");
  }
}

}  // namespace

MessageVec to_message(const Context& ctx, std::span<const i64> values) {
  const Modulus& mod = ctx.p_ring().mod();
  MessageVec m(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m[i] = mod.from_signed(values[i]);
  return m;
}

std::vector<i64> to_signed(const Context& ctx, std::span<const u64> values) {
  const Modulus& mod = ctx.p_ring().mod();
  std::vector<i64> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = mod.to_signed(values[i]);
  return out;
}

Plaintext encode_batch(const Context& ctx, const MessageVec& m) {
  check_message(ctx, m);
  const auto& map = ctx.slot_to_eval();
  ModPoly poly(ctx.n(), ctx.p(), Domain::kEvaluation);
  for (u64 k = 0; k < ctx.n(); ++k) poly[map[k]] = m[k];
  ctx.p_ring().intt_inplace(poly.coeffs);
  poly.domain = Domain::kCoefficient;
  return Plaintext{std::move(poly), Encoding::kBatch};
}

MessageVec decode_batch(const Context& ctx, const Plaintext& pt) {
  if (pt.encoding != Encoding::kBatch) throw EncodingError("not a batch plaintext");
  check_compatible(ctx.p_ring(), pt.poly);
  std::vector<u64> vals = pt.poly.coeffs;
  ctx.p_ring().ntt_inplace(vals);
  const auto& map = ctx.slot_to_eval();
  MessageVec m(ctx.n());
  for (u64 k = 0; k < ctx.n(); ++k) m[k] = vals[map[k]];
  return m;
}

Plaintext encode_direct(const Context& ctx, const MessageVec& m) {
  check_message(ctx, m);
  ModPoly poly(ctx.n(), ctx.p(), Domain::kCoefficient);
  poly.coeffs = m;
  return Plaintext{std::move(poly), Encoding::kDirect};
}

MessageVec decode_direct(const Context& ctx, const Plaintext& pt) {
  if (pt.encoding != Encoding::kDirect) throw EncodingError("not a direct plaintext");
  check_compatible(ctx.p_ring(), pt.poly);
  return pt.poly.coeffs;
}

Plaintext encode(const Context& ctx, const MessageVec& m, Encoding e) {
  return e == Encoding::kBatch ? encode_batch(ctx, m) : encode_direct(ctx, m);
}

MessageVec decode(const Context& ctx, const Plaintext& pt) {
  return pt.encoding == Encoding::kBatch ? decode_batch(ctx, pt)
                                         : decode_direct(ctx, pt);
}

}  // namespace flash
