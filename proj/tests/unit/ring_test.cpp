#include <gtest/gtest.h>

#include <random>

#include "flash/ring/instrument.hpp"
#include "flash/ring/modulus.hpp"
#include "flash/ring/params.hpp"
#include "flash/ring/poly.hpp"
#include "flash/ring/prng.hpp"
#include "flash/ring/wide.hpp"

namespace flash {
namespace {

constexpr u64 kQ = 1152921486375014401ULL;

ModPoly schoolbook(const ModPoly& f, const ModPoly& g) {
  const u64 n = f.size();
  const u64 q = f.modulus;
  std::vector<u128> acc_pos(n, 0), acc_neg(n, 0);
  for (u64 i = 0; i < n; ++i) {
    for (u64 j = 0; j < n; ++j) {
      u128 prod = static_cast<u128>(f[i]) * g[j] % q;
      if (i + j < n) {
        acc_pos[i + j] += prod;
      } else {
        acc_neg[i + j - n] += prod;
      }
    }
  }
  ModPoly h(n, q);
  for (u64 k = 0; k < n; ++k) {
    u64 pos = static_cast<u64>(acc_pos[k] % q);
    u64 neg = static_cast<u64>(acc_neg[k] % q);
    h[k] = (pos + q - neg) % q;
  }
  return h;
}

ModPoly random_poly(std::mt19937_64& rng, u64 n, u64 q) {
  ModPoly f(n, q);
  for (auto& c : f.coeffs) c = rng() % q;
  return f;
}

TEST(Modulus, BarrettMatchesDivision) {
  std::mt19937_64 rng(1);
  for (u64 q : {u64{65537}, u64{270337}, kQ, (u64{1} << 61) - 1}) {
    Modulus mod(q);
    for (int i = 0; i < 20000; ++i) {
      u64 a = rng(), b = rng();
      u128 x = static_cast<u128>(a) * b;
      EXPECT_EQ(mod.reduce128(x), static_cast<u64>(x % q));
      EXPECT_EQ(mod.reduce(a), a % q);
      u64 ar = a % q, br = b % q;
      EXPECT_EQ(mod.mul(ar, br), static_cast<u64>(static_cast<u128>(ar) * br % q));
      EXPECT_EQ(mul_shoup(ar, br, mod.shoup(br), q),
                static_cast<u64>(static_cast<u128>(ar) * br % q));
    }
    EXPECT_EQ(mod.reduce128(~static_cast<u128>(0)),
              static_cast<u64>(~static_cast<u128>(0) % q));
  }
}

TEST(Modulus, Inverse) {
  Modulus mod(kQ);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    u64 a = rng() % (kQ - 1) + 1;
    EXPECT_EQ(mod.mul(a, mod.inv(a)), 1u);
  }
}

TEST(Params, PinnedValuesMatchSearch) {
  RingParams searched = search_params(2048, 60, 18, 3.2, 16);
  RingParams pinned = load_params(FLASH_DEFAULT_PARAMS);
  EXPECT_EQ(searched, pinned);
  EXPECT_EQ(pinned, default_params());
  EXPECT_EQ(pinned.p, 270337u);
  EXPECT_EQ(std::bit_width(pinned.q), 60);
  EXPECT_EQ(pinned.q % 4096, 1u);
  EXPECT_EQ(pinned.q % pinned.p, 1u);
  EXPECT_EQ(pinned.delta(), pinned.q / pinned.p);
  // p is the smallest prime >= 2^18 that is 1 mod 4096.
  for (u64 c = (u64{1} << 18); c < pinned.p; ++c) {
    EXPECT_FALSE(c % 4096 == 1 && is_prime(c)) << c;
  }
}

TEST(Params, DecompositionCount) {
  RingParams r = default_params();
  for (int t : {8, 16, 20, 30}) {
    r.decomp_log = t;
    EXPECT_GE(r.decomp_count() * t, 60);
    EXPECT_LT((r.decomp_count() - 1) * t, 60);
  }
}

TEST(Params, RejectsBadModulus) {
  RingParams r = default_params();
  r.q += 2;
  EXPECT_THROW(r.validate(), ParameterError);
  r = default_params();
  r.n = 1000;
  EXPECT_THROW(r.validate(), ParameterError);
  EXPECT_THROW(params_from_json("{\"n\": 2048}"), FormatError);
}

TEST(Ntt, ZeroAndDelta) {
  Ring ring(2048, kQ);
  ModPoly zero = ring.zero();
  EXPECT_EQ(ntt_forward(ring, zero).coeffs, zero.coeffs);
  ModPoly delta = ring.zero();
  delta[0] = 1;
  ModPoly e = ntt_forward(ring, delta);
  for (u64 c : e.coeffs) EXPECT_EQ(c, 1u);
}

TEST(Ntt, RoundTrip) {
  std::mt19937_64 rng(3);
  for (u64 n : {u64{16}, u64{256}, u64{2048}}) {
    for (u64 q : {u64{65537}, kQ}) {
      if ((q - 1) % (2 * n) != 0) continue;
      Ring ring(n, q);
      for (int t = 0; t < 20; ++t) {
        ModPoly f = random_poly(rng, n, q);
        EXPECT_EQ(ntt_inverse(ring, ntt_forward(ring, f)), f);
      }
    }
  }
}

TEST(Ntt, SlotsAreEvaluationsAtOddPowers) {
  Ring ring(64, kQ);
  std::mt19937_64 rng(4);
  ModPoly f = random_poly(rng, 64, kQ);
  ModPoly e = ntt_forward(ring, f);
  const Modulus& mod = ring.mod();
  for (u64 i = 0; i < 64; ++i) {
    u64 x = mod.pow(ring.psi(), ring.eval_exponent(i));
    u64 acc = 0;
    for (u64 k = 64; k-- > 0;) acc = mod.add(mod.mul(acc, x), f[k]);
    EXPECT_EQ(e[i], acc) << i;
    EXPECT_EQ(ring.eval_index(ring.eval_exponent(i)), i);
  }
}

TEST(Ntt, RejectsUnfriendlyModulus) {
  EXPECT_THROW(Ring(2048, 7681), ParameterError);
}

TEST(NegacyclicMul, SmallExamples) {
  Ring ring(4, 17);
  ModPoly a(4, 17);
  a[0] = 1;
  a[1] = 1;
  ModPoly h = negacyclic_mul(ring, a, a);
  EXPECT_EQ(h.coeffs, (std::vector<u64>{1, 2, 1, 0}));
  ModPoly x3(4, 17), x1(4, 17);
  x3[3] = 1;
  x1[1] = 1;
  EXPECT_EQ(negacyclic_mul(ring, x3, x1).coeffs, (std::vector<u64>{16, 0, 0, 0}));
}

TEST(NegacyclicMul, MatchesSchoolbook) {
  std::mt19937_64 rng(5);
  Ring ring(32, kQ);
  for (int t = 0; t < 1000; ++t) {
    ModPoly f = random_poly(rng, 32, kQ);
    ModPoly g = random_poly(rng, 32, kQ);
    ASSERT_EQ(negacyclic_mul(ring, f, g), schoolbook(f, g));
  }
  Ring big(2048, kQ);
  ModPoly f = random_poly(rng, 2048, kQ);
  ModPoly g = random_poly(rng, 2048, kQ);
  EXPECT_EQ(negacyclic_mul(big, f, g), schoolbook(f, g));
}

TEST(NegacyclicMul, RejectsModulusMismatch) {
  Ring ring(16, 65537);
  ModPoly f(16, 65537), g(16, 97);
  EXPECT_THROW(negacyclic_mul(ring, f, g), UsageError);
}

TEST(MonomialMul, ShiftOne) {
  ModPoly f(4, 17);
  f.coeffs = {3, 5, 7, 11};
  EXPECT_EQ(monomial_mul(f, 1).coeffs, (std::vector<u64>{5, 7, 11, 14}));
  EXPECT_EQ(monomial_mul(f, 0), f);
}

TEST(MonomialMul, MatchesRingProductAndInverts) {
  std::mt19937_64 rng(6);
  Ring ring(64, kQ);
  for (int t = 0; t < 200; ++t) {
    ModPoly f = random_poly(rng, 64, kQ);
    i64 s = static_cast<i64>(rng() % 255) - 127;
    ModPoly mono(64, kQ);
    // x^(-s) as a ring element.
    i64 e = ((-s) % 128 + 128) % 128;
    if (e < 64) {
      mono[e] = 1;
    } else {
      mono[e - 64] = kQ - 1;
    }
    EXPECT_EQ(monomial_mul(f, s), schoolbook(f, mono));
    EXPECT_EQ(monomial_mul(monomial_mul(f, s), -s), f);
  }
}

TEST(MonomialMul, NoModularMultiply) {
  std::mt19937_64 rng(7);
  ModPoly f = random_poly(rng, 2048, kQ);
  reset_op_counters();
  ModPoly g = monomial_mul(f, 77);
  EXPECT_EQ(op_counters().monomial_moves, 2048u);
  EXPECT_EQ(op_counters().modmul_coeffs, 0u);
  EXPECT_EQ(op_counters().ntt_calls, 0u);
}

TEST(Automorphism, Examples) {
  ModPoly c(8, 17);
  c[0] = 9;
  EXPECT_EQ(automorphism(c, 1), c);
  ModPoly x(8, 17);
  x[1] = 1;
  ModPoly x3(8, 17);
  x3[3] = 1;
  EXPECT_EQ(automorphism(x, 1), x3);
  // x^3 -> x^9 = -x
  ModPoly minus_x(8, 17);
  minus_x[1] = 16;
  EXPECT_EQ(automorphism(x3, 1), minus_x);
}

TEST(Automorphism, IsRingHomomorphism) {
  std::mt19937_64 rng(8);
  Ring ring(64, kQ);
  for (int step : {1, 2, 5, 31}) {
    ModPoly f = random_poly(rng, 64, kQ);
    ModPoly g = random_poly(rng, 64, kQ);
    EXPECT_EQ(automorphism(negacyclic_mul(ring, f, g), step),
              schoolbook(automorphism(f, step), automorphism(g, step)));
  }
}

TEST(Automorphism, EvaluationPermutationMatchesCoefficientForm) {
  std::mt19937_64 rng(9);
  Ring ring(256, kQ);
  for (u64 g : {galois_element(256, 1), galois_element(256, 7),
                galois_element(256, -3), row_swap_element(256)}) {
    ModPoly f = random_poly(rng, 256, kQ);
    auto perm = automorphism_eval_permutation(ring, g);
    ModPoly via_eval =
        ntt_inverse(ring, apply_permutation(ntt_forward(ring, f), perm));
    EXPECT_EQ(via_eval, automorphism_galois(f, g));
  }
}

TEST(WidePoly, SingleTermIdentity) {
  std::mt19937_64 rng(10);
  ModPoly f = random_poly(rng, 2048, kQ);
  WidePoly acc(2048, kQ);
  wide_accumulate(acc, f, 1);
  EXPECT_EQ(finalize(acc), f);
}

ModPoly eager_sum(const std::vector<ModPoly>& fs, const std::vector<i64>& ws,
                  const std::vector<i64>& shifts) {
  Ring ring(fs[0].size(), fs[0].modulus);
  ModPoly acc = ring.zero();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    ModPoly t = shifts.empty() ? fs[i] : monomial_mul(fs[i], shifts[i]);
    t = poly_scalar_mul(ring, t, ring.mod().from_signed(ws[i]));
    poly_add_inplace(ring, acc, t);
  }
  return acc;
}

TEST(WidePoly, HundredTermsMatchEager) {
  std::mt19937_64 rng(11);
  std::vector<ModPoly> fs;
  std::vector<i64> ws, shifts;
  WidePoly acc(512, kQ), acc_shift(512, kQ);
  for (int i = 0; i < 100; ++i) {
    fs.push_back(random_poly(rng, 512, kQ));
    ws.push_back(static_cast<i64>(rng() % 255) - 127);
    shifts.push_back(static_cast<i64>(rng() % 2048) - 1024);
    wide_accumulate(acc, fs.back(), ws.back());
    wide_accumulate_shifted(acc_shift, fs.back(), shifts.back(), ws.back());
  }
  EXPECT_EQ(finalize(acc), eager_sum(fs, ws, {}));
  EXPECT_EQ(finalize(acc_shift), eager_sum(fs, ws, shifts));
}

TEST(WidePoly, WorstCaseChannelKernelBudget) {
  // 512 channels x 9 taps of max-magnitude coefficients and 8-bit scalars:
  // the value bound 60 + 8 + 13 = 81 bits is far inside the limb budget.
  const u64 n = 64;
  ModPoly f(n, kQ);
  for (auto& c : f.coeffs) c = kQ - 1;
  WidePoly acc(n, kQ);
  for (int i = 0; i < 512 * 9; ++i) wide_accumulate(acc, f, -255);
  EXPECT_LE(acc.weight_sum, WidePoly::kWeightBudget);
  Modulus mod(kQ);
  u64 expected = mod.mul(kQ - 1, mod.from_signed(-255 * 512 * 9));
  for (u64 c : finalize(acc).coeffs) EXPECT_EQ(c, expected);
}

TEST(WidePoly, OverflowRejectedBeforeCorruption) {
  ModPoly f(16, kQ);
  WidePoly acc(16, kQ);
  wide_accumulate(acc, f, static_cast<i64>(WidePoly::kWeightBudget - 1));
  WidePoly before = acc;
  EXPECT_THROW(wide_accumulate(acc, f, 2), OverflowError);
  EXPECT_EQ(acc.lo, before.lo);
  EXPECT_EQ(acc.weight_sum, before.weight_sum);
}

TEST(Prng, DeterministicAndDistinct) {
  Prng a = Prng::from_u64(1), b = Prng::from_u64(1), c = Prng::from_u64(2);
  for (int i = 0; i < 100; ++i) {
    u64 x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}

TEST(Prng, SamplersStayInRange) {
  Prng prng = Prng::from_u64(12);
  ModPoly t = sample_ternary(prng, 10000, kQ);
  int counts[3] = {0, 0, 0};
  for (u64 c : t.coeffs) {
    ASSERT_TRUE(c == 0 || c == 1 || c == kQ - 1);
    counts[c == 0 ? 0 : (c == 1 ? 1 : 2)]++;
  }
  for (int k : counts) EXPECT_GT(k, 3000);
  ModPoly e = sample_cbd(prng, 20000, kQ, 20);
  double sum_sq = 0;
  for (u64 c : e.coeffs) {
    i64 v = c > kQ / 2 ? static_cast<i64>(c) - static_cast<i64>(kQ) : static_cast<i64>(c);
    ASSERT_LE(std::abs(v), 20);
    sum_sq += static_cast<double>(v * v);
  }
  EXPECT_NEAR(std::sqrt(sum_sq / 20000), std::sqrt(10.0), 0.1);
}

}  // namespace
}  // namespace flash
