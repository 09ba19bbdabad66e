#pragma once

#include <memory>
#include <span>
#include <vector>

#include "flash/common.hpp"
#include "flash/ring/modulus.hpp"

namespace flash {

enum class Domain : u8 { kCoefficient = 0, kEvaluation = 1 };

struct ModPoly {
  std::vector<u64> coeffs;
  Domain domain = Domain::kCoefficient;
  u64 modulus = 0;

  ModPoly() = default;
  ModPoly(std::size_t n, u64 mod, Domain d = Domain::kCoefficient)
      : coeffs(n, 0), domain(d), modulus(mod) {}

  std::size_t size() const { return coeffs.size(); }
  u64& operator[](std::size_t i) { return coeffs[i]; }
  u64 operator[](std::size_t i) const { return coeffs[i]; }

  friend bool operator==(const ModPoly&, const ModPoly&) = default;
};

// Z_m[x]/(x^n + 1) with NTT tables for an NTT-friendly prime m.
class Ring {
 public:
  Ring(u64 n, u64 modulus);

  u64 n() const { return n_; }
  int log_n() const { return log_n_; }
  const Modulus& mod() const { return mod_; }
  u64 modulus() const { return mod_.value(); }
  // Primitive 2n-th root used by the transform.
  u64 psi() const { return psi_; }

  ModPoly zero(Domain d = Domain::kCoefficient) const {
    return ModPoly(n_, mod_.value(), d);
  }

  void ntt_inplace(std::span<u64> a) const;
  void intt_inplace(std::span<u64> a) const;

  // Slot i of the forward transform holds f(psi^eval_exponent(i)).
  u64 eval_exponent(u64 i) const;
  // Index of the slot holding f(psi^e), e odd.
  u64 eval_index(u64 e) const;

 private:
  u64 n_;
  int log_n_;
  Modulus mod_;
  u64 psi_;
  std::vector<u64> roots_, roots_shoup_;          // psi^brv(i)
  std::vector<u64> inv_roots_, inv_roots_shoup_;  // psi^-brv(i)
  u64 n_inv_, n_inv_shoup_;
};

u64 bit_reverse(u64 x, int bits);

// Smallest primitive 2n-th root of unity mod a prime m == 1 mod 2n.
u64 find_primitive_root(u64 two_n, const Modulus& mod);

void check_compatible(const Ring& ring, const ModPoly& f);

ModPoly ntt_forward(const Ring& ring, const ModPoly& f);
ModPoly ntt_inverse(const Ring& ring, const ModPoly& f);

ModPoly poly_add(const Ring& ring, const ModPoly& a, const ModPoly& b);
ModPoly poly_sub(const Ring& ring, const ModPoly& a, const ModPoly& b);
ModPoly poly_neg(const Ring& ring, const ModPoly& a);
ModPoly poly_scalar_mul(const Ring& ring, const ModPoly& a, u64 scalar);
// Pointwise product, both operands in evaluation domain.
ModPoly poly_pointwise(const Ring& ring, const ModPoly& a, const ModPoly& b);
void poly_add_inplace(const Ring& ring, ModPoly& a, const ModPoly& b);
void poly_sub_inplace(const Ring& ring, ModPoly& a, const ModPoly& b);

// f * g mod (x^n + 1) through the transform; accepts either domain,
// returns the domain of f.
ModPoly negacyclic_mul(const Ring& ring, const ModPoly& f, const ModPoly& g);

// f(x) * x^(-shift) mod x^n + 1. Index rotation, sign flip on wraparound.
ModPoly monomial_mul(const ModPoly& f, i64 shift);
void monomial_mul_into(const ModPoly& f, i64 shift, ModPoly& out);

// Galois element 3^step mod 2n (step reduced mod n/2, negative allowed).
u64 galois_element(u64 n, i64 step);
// Galois element for the row swap x -> x^(2n - 1).
inline u64 row_swap_element(u64 n) { return 2 * n - 1; }

// f(x^g), coefficient domain, signs tracked mod 2n.
ModPoly automorphism_galois(const ModPoly& f, u64 g);
ModPoly automorphism(const ModPoly& f, i64 step);
// Evaluation-domain permutation for x -> x^g: out[i] = in[perm[i]].
std::vector<u32> automorphism_eval_permutation(const Ring& ring, u64 g);
ModPoly apply_permutation(const ModPoly& f, const std::vector<u32>& perm);

}  // namespace flash
