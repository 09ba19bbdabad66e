#pragma once

#include <map>
#include <span>

#include "flash/bfv/ciphertext.hpp"

namespace flash {

// Batch plaintext lifted to Z_q (centered) and transformed, ready for PMult.
struct PlaintextEval {
  ModPoly poly;             // evaluation domain, modulus q
  std::vector<u64> shoup;   // Shoup companions of poly
  Encoding encoding = Encoding::kBatch;
};

PlaintextEval prepare_pmult(const Context& ctx, const Plaintext& pt);

Ciphertext to_eval(const Context& ctx, const Ciphertext& ct);
Ciphertext to_coeff(const Context& ctx, const Ciphertext& ct);

Ciphertext hadd(const Context& ctx, const Ciphertext& a, const Ciphertext& b);
void hadd_inplace(const Context& ctx, Ciphertext& a, const Ciphertext& b);
Ciphertext psub(const Context& ctx, const Ciphertext& a, const Ciphertext& b);
// c0 += delta * pt. Adds no noise; keeps the seed form of c1.
Ciphertext plain_add(const Context& ctx, const Ciphertext& a, const Plaintext& pt);
Ciphertext pmult(const Context& ctx, const Ciphertext& a, const PlaintextEval& pt);
Ciphertext pmult(const Context& ctx, const Ciphertext& a, const Plaintext& pt);
// |k| < p.
Ciphertext cmult(const Context& ctx, const Ciphertext& a, i64 k);
// Multiplication by x^(-step): left slot shift, sign flip on wraparound.
Ciphertext drot(const Context& ctx, const Ciphertext& a, i64 step);

struct GaloisKey {
  u64 galois = 0;
  int decomp_log = 0;
  std::vector<ModPoly> k0, k1;  // evaluation domain, one pair per digit
  std::vector<u32> perm;        // evaluation-domain index map of x -> x^galois
};

class SwitchingKeySet {
 public:
  SwitchingKeySet() = default;

  bool empty() const { return keys_.empty(); }
  std::size_t key_count() const { return keys_.size(); }
  bool has_galois(u64 g) const { return keys_.count(g) != 0; }
  bool has_step(const Context& ctx, i64 step) const;
  const GaloisKey& get(u64 g) const;
  void insert(GaloisKey key);
  // key_count * l * 2 * n * 8.
  u64 storage_bytes() const;

 private:
  std::map<u64, GaloisKey> keys_;
};

struct KeySwitchOptions {
  int decomp_log = 0;  // 0: take it from the context
  bool row_swap = false;
};

SwitchingKeySet gen_switching_keys(const Context& ctx, const SecretKey& sk,
                                   std::span<const i64> steps, Prng& prng,
                                   KeySwitchOptions options = {});

// Storage a key set would occupy without generating it.
u64 switching_key_bytes(const Context& ctx, std::size_t key_count, int decomp_log);

// Batch rotation: both rows shift left by step. Output keeps the input domain.
Ciphertext hrot(const Context& ctx, const Ciphertext& a, i64 step,
                const SwitchingKeySet& keys);
// Swap the two slot rows (x -> x^(2n-1)).
Ciphertext hrot_rows(const Context& ctx, const Ciphertext& a,
                     const SwitchingKeySet& keys);

}  // namespace flash
