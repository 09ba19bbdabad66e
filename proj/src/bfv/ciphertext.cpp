#include "flash/bfv/ciphertext.hpp"

#include <bit>

namespace flash {

ZeroPool::ZeroPool(std::vector<ZeroCiphertext> items) { add(std::move(items)); }

void ZeroPool::add(std::vector<ZeroCiphertext> items) {
  for (auto& z : items) items_.push_back(std::move(z));
}

ZeroCiphertext ZeroPool::take() {
  if (items_.empty()) {
    throw ProtocolError("zero-ciphertext pool exhausted");
  }
  ZeroCiphertext z = std::move(items_.front());
  items_.pop_front();
  return z;
}

SecretKey keygen(const Context& ctx, Prng& prng) {
  SecretKey sk;
  sk.s = sample_ternary(prng, ctx.n(), ctx.q());
  sk.s_ntt = ntt_forward(ctx.q_ring(), sk.s);
  return sk;
}

namespace {

// c0 += delta * m, m in [0, p).
void add_scaled_message(const Context& ctx, ModPoly& c0, const Plaintext& pt) {
  const u64 q = ctx.q();
  const u64 delta = ctx.delta();
  const u64* m = pt.poly.coeffs.data();
  u64* c = c0.coeffs.data();
  for (u64 i = 0; i < ctx.n(); ++i) {
    u64 s = c[i] + delta * m[i];
    c[i] = s >= q ? s - q : s;
  }
}

void check_plaintext(const Context& ctx, const Plaintext& pt) {
  if (pt.poly.size() != ctx.n() || pt.poly.modulus != ctx.p() ||
      pt.poly.domain != Domain::kCoefficient) {
    throw UsageError("plaintext does not match the context");
  }
}

}  // namespace

Ciphertext encrypt_private(const Context& ctx, const Plaintext& pt,
                           const SecretKey& sk, Prng& prng) {
  check_plaintext(ctx, pt);
  const Ring& ring = ctx.q_ring();
  Ciphertext ct;
  ct.encoding = pt.encoding;
  ct.fresh = true;
  ct.seed = prng.next_seed();
  ct.c1 = expand_seed(ct.seed, ctx.n(), ctx.q());
  ModPoly as = ntt_forward(ring, ct.c1);
  for (u64 i = 0; i < ctx.n(); ++i) as[i] = ring.mod().mul(as[i], sk.s_ntt[i]);
  ring.intt_inplace(as.coeffs);
  as.domain = Domain::kCoefficient;
  ModPoly e = sample_cbd(prng, ctx.n(), ctx.q(), ctx.params().cbd_eta());
  poly_add_inplace(ring, as, e);
  ct.c0 = poly_neg(ring, as);
  add_scaled_message(ctx, ct.c0, pt);
  return ct;
}

std::vector<ZeroCiphertext> precompute_zero(const Context& ctx,
                                            const SecretKey& sk, Prng& prng,
                                            std::size_t count) {
  Plaintext zero{ModPoly(ctx.n(), ctx.p()), Encoding::kDirect};
  std::vector<ZeroCiphertext> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back(encrypt_private(ctx, zero, sk, prng));
  }
  return out;
}

ZeroPool make_zero_pool(const Context& ctx, const SecretKey& sk, Prng& prng,
                        std::size_t count) {
  return ZeroPool(precompute_zero(ctx, sk, prng, count));
}

Ciphertext encrypt_online(const Context& ctx, const Plaintext& pt,
                          ZeroCiphertext& zero) {
  if (zero.consumed) {
    throw ProtocolError("zero ciphertext already consumed");
  }
  check_plaintext(ctx, pt);
  if (zero.ct.domain() != Domain::kCoefficient || zero.ct.c0.size() != ctx.n()) {
    throw UsageError("zero ciphertext does not match the context");
  }
  zero.consumed = true;
  Ciphertext ct = std::move(zero.ct);
  ct.encoding = pt.encoding;
  add_scaled_message(ctx, ct.c0, pt);
  return ct;
}

namespace {

// x = c0 + c1 s in coefficient domain.
ModPoly raw_phase(const Context& ctx, const Ciphertext& ct, const SecretKey& sk) {
  const Ring& ring = ctx.q_ring();
  check_compatible(ring, ct.c0);
  check_compatible(ring, ct.c1);
  if (ct.c0.domain != ct.c1.domain) throw UsageError("ciphertext domain mismatch");
  const Modulus& mod = ring.mod();
  ModPoly x(ctx.n(), ctx.q(), Domain::kEvaluation);
  if (ct.domain() == Domain::kEvaluation) {
    for (u64 i = 0; i < ctx.n(); ++i) {
      x[i] = mod.add(ct.c0[i], mod.mul(ct.c1[i], sk.s_ntt[i]));
    }
    ring.intt_inplace(x.coeffs);
  } else {
    x.coeffs = ct.c1.coeffs;
    ring.ntt_inplace(x.coeffs);
    for (u64 i = 0; i < ctx.n(); ++i) x[i] = mod.mul(x[i], sk.s_ntt[i]);
    ring.intt_inplace(x.coeffs);
    for (u64 i = 0; i < ctx.n(); ++i) x[i] = mod.add(x[i], ct.c0[i]);
  }
  x.domain = Domain::kCoefficient;
  return x;
}

int budget_from_max(u64 q, u64 max_noise) {
  if (max_noise == 0) return std::bit_width(q) - 1;
  u64 t = q / (2 * max_noise);
  return t == 0 ? 0 : std::bit_width(t) - 1;
}

}  // namespace

DecryptResult decrypt_with_budget(const Context& ctx, const Ciphertext& ct,
                                  const SecretKey& sk) {
  ModPoly x = raw_phase(ctx, ct, sk);
  const u64 q = ctx.q();
  const u64 p = ctx.p();
  const u64 half_q = q / 2;
  const long double inv_q = 1.0L / static_cast<long double>(q);
  Plaintext pt{ModPoly(ctx.n(), p), ct.encoding};
  u64 max_noise = 0;
  for (u64 i = 0; i < ctx.n(); ++i) {
    // k = round(p x / q), v = p x - k q in [-q/2, q/2].
    u128 y = static_cast<u128>(x[i]) * p + half_q;
    u64 k = static_cast<u64>(static_cast<long double>(y) * inv_q);
    u128 kq = static_cast<u128>(k) * q;
    while (kq > y) {
      --k;
      kq -= q;
    }
    while (y - kq >= q) {
      ++k;
      kq += q;
    }
    i64 v = static_cast<i64>(static_cast<u64>(y - kq)) - static_cast<i64>(half_q);
    u64 mag = static_cast<u64>(v < 0 ? -v : v);
    if (mag > max_noise) max_noise = mag;
    pt.poly[i] = k % p;
  }
  return DecryptResult{std::move(pt), budget_from_max(q, max_noise)};
}

Plaintext decrypt(const Context& ctx, const Ciphertext& ct, const SecretKey& sk) {
  return decrypt_with_budget(ctx, ct, sk).pt;
}

int noise_budget(const Context& ctx, const Ciphertext& ct, const SecretKey& sk) {
  return decrypt_with_budget(ctx, ct, sk).budget;
}

PublicKey gen_public_key(const Context& ctx, const SecretKey& sk, Prng& prng) {
  const Ring& ring = ctx.q_ring();
  PublicKey pk;
  pk.p1 = ntt_forward(ring, sample_uniform(prng, ctx.n(), ctx.q()));
  ModPoly e = ntt_forward(ring, sample_cbd(prng, ctx.n(), ctx.q(), ctx.params().cbd_eta()));
  ModPoly as = poly_pointwise(ring, pk.p1, sk.s_ntt);
  poly_add_inplace(ring, as, e);
  pk.p0 = poly_neg(ring, as);
  return pk;
}

Ciphertext encrypt_public(const Context& ctx, const Plaintext& pt,
                          const PublicKey& pk, Prng& prng) {
  check_plaintext(ctx, pt);
  const Ring& ring = ctx.q_ring();
  const int eta = ctx.params().cbd_eta();
  ModPoly u = ntt_forward(ring, sample_ternary(prng, ctx.n(), ctx.q()));
  Ciphertext ct;
  ct.encoding = pt.encoding;
  ct.c0 = ntt_inverse(ring, poly_pointwise(ring, pk.p0, u));
  ct.c1 = ntt_inverse(ring, poly_pointwise(ring, pk.p1, u));
  poly_add_inplace(ring, ct.c0, sample_cbd(prng, ctx.n(), ctx.q(), eta));
  poly_add_inplace(ring, ct.c1, sample_cbd(prng, ctx.n(), ctx.q(), eta));
  add_scaled_message(ctx, ct.c0, pt);
  return ct;
}

}  // namespace flash
