#include "flash/bfv/evaluator.hpp"

#include <algorithm>

#include "flash/ring/instrument.hpp"

namespace flash {

namespace {

void check_same(const Ciphertext& a, const Ciphertext& b) {
  if (a.encoding != b.encoding) {
    throw EncodingError(std::string("encoding mismatch: ") +
                        encoding_name(a.encoding) + " vs " +
                        encoding_name(b.encoding));
  }
  if (a.domain() != b.domain()) throw UsageError("ciphertext domain mismatch");
}

void require_batch(const Ciphertext& a, const char* op) {
  if (a.encoding != Encoding::kBatch) {
    throw EncodingError(std::string(op) + " requires batch encoding");
  }
}

}  // namespace

PlaintextEval prepare_pmult(const Context& ctx, const Plaintext& pt) {
  if (pt.encoding != Encoding::kBatch) {
    throw EncodingError("PMult plaintext must be batch encoded");
  }
  const Modulus& pm = ctx.p_ring().mod();
  const Modulus& qm = ctx.q_ring().mod();
  PlaintextEval out;
  out.poly = ModPoly(ctx.n(), ctx.q(), Domain::kCoefficient);
  for (u64 i = 0; i < ctx.n(); ++i) out.poly[i] = qm.from_signed(pm.to_signed(pt.poly[i]));
  ctx.q_ring().ntt_inplace(out.poly.coeffs);
  out.poly.domain = Domain::kEvaluation;
  out.shoup.resize(ctx.n());
  for (u64 i = 0; i < ctx.n(); ++i) out.shoup[i] = qm.shoup(out.poly[i]);
  return out;
}

Ciphertext to_eval(const Context& ctx, const Ciphertext& ct) {
  if (ct.domain() == Domain::kEvaluation) return ct;
  Ciphertext out = ct;
  ctx.q_ring().ntt_inplace(out.c0.coeffs);
  ctx.q_ring().ntt_inplace(out.c1.coeffs);
  out.c0.domain = out.c1.domain = Domain::kEvaluation;
  out.fresh = false;
  return out;
}

Ciphertext to_coeff(const Context& ctx, const Ciphertext& ct) {
  if (ct.domain() == Domain::kCoefficient) return ct;
  Ciphertext out = ct;
  ctx.q_ring().intt_inplace(out.c0.coeffs);
  ctx.q_ring().intt_inplace(out.c1.coeffs);
  out.c0.domain = out.c1.domain = Domain::kCoefficient;
  out.fresh = false;
  return out;
}

void hadd_inplace(const Context& ctx, Ciphertext& a, const Ciphertext& b) {
  check_same(a, b);
  poly_add_inplace(ctx.q_ring(), a.c0, b.c0);
  poly_add_inplace(ctx.q_ring(), a.c1, b.c1);
  a.fresh = false;
}

Ciphertext hadd(const Context& ctx, const Ciphertext& a, const Ciphertext& b) {
  check_same(a, b);
  const u64 q = ctx.q();
  const u64 n = ctx.n();
  Ciphertext out;
  out.encoding = a.encoding;
  out.c0 = ModPoly(n, q, a.domain());
  out.c1 = ModPoly(n, q, a.domain());
  const u64 *x0 = a.c0.coeffs.data(), *y0 = b.c0.coeffs.data();
  const u64 *x1 = a.c1.coeffs.data(), *y1 = b.c1.coeffs.data();
  u64 *z0 = out.c0.coeffs.data(), *z1 = out.c1.coeffs.data();
  for (u64 i = 0; i < n; ++i) {
    u64 s = x0[i] + y0[i];
    z0[i] = s >= q ? s - q : s;
  }
  for (u64 i = 0; i < n; ++i) {
    u64 s = x1[i] + y1[i];
    z1[i] = s >= q ? s - q : s;
  }
  return out;
}

Ciphertext psub(const Context& ctx, const Ciphertext& a, const Ciphertext& b) {
  check_same(a, b);
  Ciphertext out = a;
  poly_sub_inplace(ctx.q_ring(), out.c0, b.c0);
  poly_sub_inplace(ctx.q_ring(), out.c1, b.c1);
  out.fresh = false;
  return out;
}

Ciphertext plain_add(const Context& ctx, const Ciphertext& a, const Plaintext& pt) {
  if (a.encoding != pt.encoding) {
    throw EncodingError("plain_add encoding mismatch");
  }
  if (pt.poly.modulus != ctx.p() || pt.poly.size() != ctx.n()) {
    throw UsageError("plaintext does not match the context");
  }
  const u64 q = ctx.q();
  const u64 delta = ctx.delta();
  ModPoly scaled(ctx.n(), q, Domain::kCoefficient);
  for (u64 i = 0; i < ctx.n(); ++i) scaled[i] = delta * pt.poly[i];
  if (a.domain() == Domain::kEvaluation) {
    ctx.q_ring().ntt_inplace(scaled.coeffs);
    scaled.domain = Domain::kEvaluation;
  }
  Ciphertext out = a;
  poly_add_inplace(ctx.q_ring(), out.c0, scaled);
  return out;
}

Ciphertext pmult(const Context& ctx, const Ciphertext& a, const PlaintextEval& pt) {
  require_batch(a, "PMult");
  if (pt.encoding != Encoding::kBatch) throw EncodingError("PMult plaintext must be batch");
  if (a.domain() != Domain::kEvaluation) {
    throw UsageError("PMult requires an evaluation-domain ciphertext");
  }
  const Modulus& mod = ctx.q_ring().mod();
  const u64 n = ctx.n();
  Ciphertext out;
  out.encoding = Encoding::kBatch;
  out.c0 = ModPoly(n, ctx.q(), Domain::kEvaluation);
  out.c1 = ModPoly(n, ctx.q(), Domain::kEvaluation);
  const u64* w = pt.poly.coeffs.data();
  const u64 q = mod.value();
  if (pt.shoup.size() == n) {
    const u64* wp = pt.shoup.data();
    for (u64 i = 0; i < n; ++i) out.c0[i] = mul_shoup(a.c0[i], w[i], wp[i], q);
    for (u64 i = 0; i < n; ++i) out.c1[i] = mul_shoup(a.c1[i], w[i], wp[i], q);
  } else {
    for (u64 i = 0; i < n; ++i) out.c0[i] = mod.mul(a.c0[i], w[i]);
    for (u64 i = 0; i < n; ++i) out.c1[i] = mod.mul(a.c1[i], w[i]);
  }
  op_counters().modmul_coeffs += 2 * n;
  return out;
}

Ciphertext pmult(const Context& ctx, const Ciphertext& a, const Plaintext& pt) {
  return pmult(ctx, a, prepare_pmult(ctx, pt));
}

Ciphertext cmult(const Context& ctx, const Ciphertext& a, i64 k) {
  const i64 p = static_cast<i64>(ctx.p());
  if (k <= -p || k >= p) throw UsageError("CMult scalar out of range");
  const Modulus& mod = ctx.q_ring().mod();
  u64 w = mod.from_signed(k);
  Ciphertext out = a;
  out.c0 = poly_scalar_mul(ctx.q_ring(), a.c0, w);
  out.c1 = poly_scalar_mul(ctx.q_ring(), a.c1, w);
  out.fresh = false;
  return out;
}

Ciphertext drot(const Context& ctx, const Ciphertext& a, i64 step) {
  if (a.encoding != Encoding::kDirect) {
    throw EncodingError("DRot requires direct encoding");
  }
  if (a.domain() != Domain::kCoefficient) {
    throw UsageError("DRot requires a coefficient-domain ciphertext");
  }
  (void)ctx;
  Ciphertext out;
  out.encoding = a.encoding;
  monomial_mul_into(a.c0, step, out.c0);
  monomial_mul_into(a.c1, step, out.c1);
  return out;
}

bool SwitchingKeySet::has_step(const Context& ctx, i64 step) const {
  return has_galois(galois_element(ctx.n(), step));
}

const GaloisKey& SwitchingKeySet::get(u64 g) const {
  auto it = keys_.find(g);
  if (it == keys_.end()) {
    throw KeyError(keys_.empty() ? "HRot unavailable: empty switching key set"
                                 : "no switching key for galois element " +
                                       std::to_string(g));
  }
  return it->second;
}

void SwitchingKeySet::insert(GaloisKey key) {
  u64 g = key.galois;
  keys_[g] = std::move(key);
}

u64 SwitchingKeySet::storage_bytes() const {
  u64 total = 0;
  for (const auto& [g, k] : keys_) {
    for (const auto& poly : k.k0) total += poly.size() * 8;
    for (const auto& poly : k.k1) total += poly.size() * 8;
  }
  return total;
}

u64 switching_key_bytes(const Context& ctx, std::size_t key_count, int decomp_log) {
  RingParams r = ctx.params();
  r.decomp_log = decomp_log;
  return static_cast<u64>(key_count) * r.decomp_count() * 2 * ctx.n() * 8;
}

namespace {

GaloisKey make_key(const Context& ctx, const SecretKey& sk, u64 g,
                   int decomp_log, Prng& prng) {
  const Ring& ring = ctx.q_ring();
  const Modulus& mod = ring.mod();
  RingParams r = ctx.params();
  r.decomp_log = decomp_log;
  const int l = r.decomp_count();
  GaloisKey key;
  key.galois = g;
  key.decomp_log = decomp_log;
  key.perm = automorphism_eval_permutation(ring, g);
  ModPoly s_rot = apply_permutation(sk.s_ntt, key.perm);
  for (int i = 0; i < l; ++i) {
    ModPoly a = ntt_forward(ring, sample_uniform(prng, ctx.n(), ctx.q()));
    ModPoly e = ntt_forward(ring, sample_cbd(prng, ctx.n(), ctx.q(), r.cbd_eta()));
    // k0 = -(a s + e) + 2^(T i) s(x^g)
    u64 factor = mod.pow(2, static_cast<u64>(decomp_log) * i);
    ModPoly k0(ctx.n(), ctx.q(), Domain::kEvaluation);
    for (u64 j = 0; j < ctx.n(); ++j) {
      u64 as_e = mod.add(mod.mul(a[j], sk.s_ntt[j]), e[j]);
      k0[j] = mod.sub(mod.mul(factor, s_rot[j]), as_e);
    }
    key.k0.push_back(std::move(k0));
    key.k1.push_back(std::move(a));
  }
  return key;
}

}  // namespace

SwitchingKeySet gen_switching_keys(const Context& ctx, const SecretKey& sk,
                                   std::span<const i64> steps, Prng& prng,
                                   KeySwitchOptions options) {
  if (steps.empty() && !options.row_swap) {
    throw UsageError("switching key generation needs at least one step");
  }
  const int t = options.decomp_log > 0 ? options.decomp_log : ctx.params().decomp_log;
  std::vector<u64> elements;
  for (i64 s : steps) {
    u64 g = galois_element(ctx.n(), s);
    if (g != 1) elements.push_back(g);
  }
  if (options.row_swap) elements.push_back(row_swap_element(ctx.n()));
  std::sort(elements.begin(), elements.end());
  elements.erase(std::unique(elements.begin(), elements.end()), elements.end());
  SwitchingKeySet set;
  for (u64 g : elements) set.insert(make_key(ctx, sk, g, t, prng));
  return set;
}

namespace {

Ciphertext key_switch(const Context& ctx, const Ciphertext& in, const GaloisKey& key) {
  require_batch(in, "HRot");
  const Ring& ring = ctx.q_ring();
  const Modulus& mod = ring.mod();
  const u64 n = ctx.n();
  const bool was_coeff = in.domain() == Domain::kCoefficient;
  Ciphertext a = was_coeff ? to_eval(ctx, in) : in;

  // Digits of c1 in coefficient form, each transformed.
  std::vector<u64> c1 = a.c1.coeffs;
  ring.intt_inplace(c1);
  const int t = key.decomp_log;
  const int l = static_cast<int>(key.k0.size());
  const u64 mask = t >= 64 ? ~u64{0} : (u64{1} << t) - 1;
  std::vector<std::vector<u64>> digits(l, std::vector<u64>(n));
  for (int i = 0; i < l; ++i) {
    const int shift = t * i;
    for (u64 j = 0; j < n; ++j) digits[i][j] = (c1[j] >> shift) & mask;
    ring.ntt_inplace(digits[i]);
  }

  Ciphertext out;
  out.encoding = a.encoding;
  out.c0 = ModPoly(n, ctx.q(), Domain::kEvaluation);
  out.c1 = ModPoly(n, ctx.q(), Domain::kEvaluation);
  const u32* perm = key.perm.data();
  for (u64 j = 0; j < n; ++j) {
    u128 acc0 = 0, acc1 = 0;
    const u32 src = perm[j];
    for (int i = 0; i < l; ++i) {
      u64 d = digits[i][src];
      acc0 += static_cast<u128>(d) * key.k0[i][j];
      acc1 += static_cast<u128>(d) * key.k1[i][j];
    }
    out.c0[j] = mod.add(a.c0[src], mod.reduce128(acc0));
    out.c1[j] = mod.reduce128(acc1);
  }
  op_counters().modmul_coeffs += 2 * n * l;
  return was_coeff ? to_coeff(ctx, out) : out;
}

}  // namespace

Ciphertext hrot(const Context& ctx, const Ciphertext& a, i64 step,
                const SwitchingKeySet& keys) {
  require_batch(a, "HRot");
  u64 g = galois_element(ctx.n(), step);
  if (g == 1) return a;
  return key_switch(ctx, a, keys.get(g));
}

Ciphertext hrot_rows(const Context& ctx, const Ciphertext& a,
                     const SwitchingKeySet& keys) {
  require_batch(a, "HRot");
  return key_switch(ctx, a, keys.get(row_swap_element(ctx.n())));
}

}  // namespace flash
