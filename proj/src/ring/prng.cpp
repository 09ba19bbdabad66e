#include "flash/ring/prng.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>

#include "flash/ring/instrument.hpp"

namespace flash {

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error("libsodium initialization failed");
}

}  // namespace

Prng::Prng(const Seed& seed) : key_(seed) { ensure_sodium(); }

Prng Prng::from_u64(u64 seed) {
  ensure_sodium();
  u8 msg[16] = {'f', 'l', 'a', 's', 'h', '-', 's', 'e'};
  for (int i = 0; i < 8; ++i) msg[8 + i] = static_cast<u8>(seed >> (8 * i));
  Seed key;
  crypto_generichash(key.data(), key.size(), msg, sizeof(msg), nullptr, 0);
  return Prng(key);
}

Prng Prng::from_os() {
  ensure_sodium();
  Seed key;
  randombytes_buf(key.data(), key.size());
  return Prng(key);
}

void Prng::refill() {
  static const u8 kNonce[crypto_stream_chacha20_NONCEBYTES] = {0};
  std::memset(buf_.data(), 0, buf_.size());
  crypto_stream_chacha20_xor_ic(buf_.data(), buf_.data(), buf_.size(), kNonce,
                                counter_, key_.data());
  counter_ += buf_.size() / 64;
  pos_ = 0;
  op_counters().rng_bytes += buf_.size();
}

void Prng::fill(std::span<u8> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (pos_ == buf_.size()) refill();
    std::size_t take = std::min(out.size() - done, buf_.size() - pos_);
    std::memcpy(out.data() + done, buf_.data() + pos_, take);
    pos_ += take;
    done += take;
  }
}

u64 Prng::next_u64() {
  if (buf_.size() - pos_ < 8) {
    if (pos_ != buf_.size()) pos_ = buf_.size();
    refill();
  }
  u64 v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

u64 Prng::uniform(u64 bound) {
  if (bound == 0) throw UsageError("uniform bound must be positive");
  if ((bound & (bound - 1)) == 0) return next_u64() & (bound - 1);
  const int bits = std::bit_width(bound - 1);
  const u64 mask = bits == 64 ? ~u64{0} : (u64{1} << bits) - 1;
  for (;;) {
    u64 v = next_u64() & mask;
    if (v < bound) return v;
  }
}

Prng::Seed Prng::next_seed() {
  Seed s;
  fill(s);
  return s;
}

ModPoly sample_uniform(Prng& prng, u64 n, u64 q) {
  ModPoly out(n, q);
  for (u64 i = 0; i < n; ++i) out[i] = prng.uniform(q);
  return out;
}

ModPoly expand_seed(const Prng::Seed& seed, u64 n, u64 q) {
  Prng prng(seed);
  return sample_uniform(prng, n, q);
}

ModPoly sample_ternary(Prng& prng, u64 n, u64 q) {
  ModPoly out(n, q);
  u64 word = 0;
  int left = 0;
  for (u64 i = 0; i < n;) {
    if (left == 0) {
      word = prng.next_u64();
      left = 32;
    }
    u64 v = word & 3;
    word >>= 2;
    --left;
    if (v == 3) continue;
    out[i++] = v == 0 ? 0 : (v == 1 ? 1 : q - 1);
  }
  return out;
}

ModPoly sample_cbd(Prng& prng, u64 n, u64 q, int eta) {
  ModPoly out(n, q);
  for (u64 i = 0; i < n; ++i) {
    int e = 0;
    int remaining = eta;
    while (remaining > 0) {
      int take = remaining > 32 ? 32 : remaining;
      u64 m = take == 32 ? 0xffffffffULL : ((u64{1} << take) - 1);
      u64 r = prng.next_u64();
      e += std::popcount(r & m) - std::popcount((r >> 32) & m);
      remaining -= take;
    }
    out[i] = e >= 0 ? static_cast<u64>(e) : q - static_cast<u64>(-e);
  }
  return out;
}

}  // namespace flash
