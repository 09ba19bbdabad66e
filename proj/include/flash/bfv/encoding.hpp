#pragma once

#include <span>
#include <vector>

#include "flash/bfv/context.hpp"

namespace flash {

enum class Encoding : u8 { kBatch = 0, kDirect = 1 };

const char* encoding_name(Encoding e);

// n values in [0, p).
using MessageVec = std::vector<u64>;

struct Plaintext {
  ModPoly poly;  // coefficient domain, modulus p
  Encoding encoding = Encoding::kDirect;
};

// Signed values in (-p/2, p/2] to [0, p) and back.
MessageVec to_message(const Context& ctx, std::span<const i64> values);
std::vector<i64> to_signed(const Context& ctx, std::span<const u64> values);

// Slot-wise (SIMD) encoding through the plaintext-ring transform.
Plaintext encode_batch(const Context& ctx, const MessageVec& m);
MessageVec decode_batch(const Context& ctx, const Plaintext& pt);

// Coefficient i carries m[i].
Plaintext encode_direct(const Context& ctx, const MessageVec& m);
MessageVec decode_direct(const Context& ctx, const Plaintext& pt);

Plaintext encode(const Context& ctx, const MessageVec& m, Encoding e);
MessageVec decode(const Context& ctx, const Plaintext& pt);

}  // namespace flash
