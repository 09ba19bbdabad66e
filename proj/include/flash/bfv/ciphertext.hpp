#pragma once

#include <deque>
#include <vector>

#include "flash/bfv/encoding.hpp"
#include "flash/ring/prng.hpp"

namespace flash {

struct SecretKey {
  ModPoly s;      // ternary, coefficient domain, mod q
  ModPoly s_ntt;  // same, evaluation domain
};

struct Ciphertext {
  ModPoly c0, c1;
  Encoding encoding = Encoding::kDirect;
  // c1 is the coefficient-domain expansion of seed.
  bool fresh = false;
  Prng::Seed seed{};

  Domain domain() const { return c0.domain; }
};

// A precomputed encryption of zero. Consumed by exactly one online
// encryption; copying is disabled so a pool entry cannot be duplicated.
struct ZeroCiphertext {
  Ciphertext ct;
  bool consumed = false;

  ZeroCiphertext() = default;
  explicit ZeroCiphertext(Ciphertext c) : ct(std::move(c)) {}
  ZeroCiphertext(const ZeroCiphertext&) = delete;
  ZeroCiphertext& operator=(const ZeroCiphertext&) = delete;
  ZeroCiphertext(ZeroCiphertext&&) = default;
  ZeroCiphertext& operator=(ZeroCiphertext&&) = default;
};

class ZeroPool {
 public:
  ZeroPool() = default;
  explicit ZeroPool(std::vector<ZeroCiphertext> items);
  void add(std::vector<ZeroCiphertext> items);
  // Throws ProtocolError when empty.
  ZeroCiphertext take();
  std::size_t size() const { return items_.size(); }

 private:
  std::deque<ZeroCiphertext> items_;
};

SecretKey keygen(const Context& ctx, Prng& prng);

// (-(a s + e) + delta m, a) with a expanded from a fresh seed.
Ciphertext encrypt_private(const Context& ctx, const Plaintext& pt,
                           const SecretKey& sk, Prng& prng);

std::vector<ZeroCiphertext> precompute_zero(const Context& ctx,
                                            const SecretKey& sk, Prng& prng,
                                            std::size_t count);
ZeroPool make_zero_pool(const Context& ctx, const SecretKey& sk, Prng& prng,
                        std::size_t count);

// zero + delta m. No sampling, no transform.
Ciphertext encrypt_online(const Context& ctx, const Plaintext& pt,
                          ZeroCiphertext& zero);

Plaintext decrypt(const Context& ctx, const Ciphertext& ct, const SecretKey& sk);

// floor(log2 q - log2(2 |v|_inf)) with v = [p (c0 + c1 s)]_q centered.
// Needs the secret key; test and measurement use only.
int noise_budget(const Context& ctx, const Ciphertext& ct, const SecretKey& sk);

struct DecryptResult {
  Plaintext pt;
  int budget;
};
DecryptResult decrypt_with_budget(const Context& ctx, const Ciphertext& ct,
                                  const SecretKey& sk);

// Public-key encryption, reference implementation for latency comparison.
struct PublicKey {
  ModPoly p0, p1;  // evaluation domain
};
PublicKey gen_public_key(const Context& ctx, const SecretKey& sk, Prng& prng);
Ciphertext encrypt_public(const Context& ctx, const Plaintext& pt,
                          const PublicKey& pk, Prng& prng);

}  // namespace flash
