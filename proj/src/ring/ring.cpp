#include <algorithm>

#include "flash/ring/instrument.hpp"
#include "flash/ring/poly.hpp"

namespace flash {

OpCounters& op_counters() {
  thread_local OpCounters counters;
  return counters;
}

u64 bit_reverse(u64 x, int bits) {
  u64 r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | ((x >> i) & 1);
  }
  return r;
}

u64 find_primitive_root(u64 two_n, const Modulus& mod) {
  u64 m = mod.value();
  if ((m - 1) % two_n != 0) {
    throw ParameterError("modulus " + std::to_string(m) + " is not 1 mod " +
                         std::to_string(two_n));
  }
  u64 cofactor = (m - 1) / two_n;
  u64 root = 0;
  for (u64 g = 2; g < m; ++g) {
    u64 x = mod.pow(g, cofactor);
    if (mod.pow(x, two_n / 2) == m - 1) {
      root = x;
      break;
    }
  }
  if (root == 0) throw ParameterError("no primitive root found");
  // Canonical choice: the smallest of all primitive 2n-th roots.
  u64 best = root;
  u64 sq = mod.mul(root, root);
  u64 cur = root;
  for (u64 k = 1; k < two_n / 2; ++k) {
    cur = mod.mul(cur, sq);
    best = std::min(best, cur);
  }
  return best;
}

Ring::Ring(u64 n, u64 modulus) : n_(n), mod_(modulus) {
  if (n < 2 || (n & (n - 1)) != 0) {
    throw ParameterError("ring degree must be a power of two");
  }
  log_n_ = 0;
  while ((u64{1} << log_n_) < n) ++log_n_;
  psi_ = find_primitive_root(2 * n, mod_);
  u64 psi_inv = mod_.inv(psi_);
  roots_.resize(n);
  inv_roots_.resize(n);
  roots_shoup_.resize(n);
  inv_roots_shoup_.resize(n);
  u64 pw = 1, ipw = 1;
  std::vector<u64> powers(n), inv_powers(n);
  for (u64 i = 0; i < n; ++i) {
    powers[i] = pw;
    inv_powers[i] = ipw;
    pw = mod_.mul(pw, psi_);
    ipw = mod_.mul(ipw, psi_inv);
  }
  for (u64 i = 0; i < n; ++i) {
    u64 r = bit_reverse(i, log_n_);
    roots_[i] = powers[r];
    inv_roots_[i] = inv_powers[r];
    roots_shoup_[i] = mod_.shoup(roots_[i]);
    inv_roots_shoup_[i] = mod_.shoup(inv_roots_[i]);
  }
  n_inv_ = mod_.inv(n);
  n_inv_shoup_ = mod_.shoup(n_inv_);
}

void Ring::ntt_inplace(std::span<u64> a) const {
  ++op_counters().ntt_calls;
  const u64 q = mod_.value();
  const u64 two_q = 2 * q;
  u64 t = n_;
  for (u64 m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (u64 i = 0; i < m; ++i) {
      const u64 w = roots_[m + i];
      const u64 wp = roots_shoup_[m + i];
      u64* x = a.data() + 2 * i * t;
      u64* y = x + t;
      for (u64 j = 0; j < t; ++j) {
        u64 u = x[j];
        u = u >= two_q ? u - two_q : u;
        u64 v = mul_shoup_lazy(y[j], w, wp, q);
        x[j] = u + v;
        y[j] = u + two_q - v;
      }
    }
  }
  for (u64 i = 0; i < n_; ++i) {
    u64 v = a[i];
    v = v >= two_q ? v - two_q : v;
    a[i] = v >= q ? v - q : v;
  }
}

void Ring::intt_inplace(std::span<u64> a) const {
  ++op_counters().ntt_calls;
  const u64 q = mod_.value();
  const u64 two_q = 2 * q;
  u64 t = 1;
  for (u64 m = n_; m > 1; m >>= 1) {
    const u64 h = m >> 1;
    for (u64 i = 0; i < h; ++i) {
      const u64 w = inv_roots_[h + i];
      const u64 wp = inv_roots_shoup_[h + i];
      u64* x = a.data() + 2 * i * t;
      u64* y = x + t;
      for (u64 j = 0; j < t; ++j) {
        u64 u = x[j];
        u64 v = y[j];
        u64 s = u + v;
        x[j] = s >= two_q ? s - two_q : s;
        y[j] = mul_shoup_lazy(u + two_q - v, w, wp, q);
      }
    }
    t <<= 1;
  }
  for (u64 i = 0; i < n_; ++i) {
    a[i] = mul_shoup(a[i], n_inv_, n_inv_shoup_, q);
  }
}

u64 Ring::eval_exponent(u64 i) const { return 2 * bit_reverse(i, log_n_) + 1; }

u64 Ring::eval_index(u64 e) const {
  return bit_reverse(((e % (2 * n_)) - 1) / 2, log_n_);
}

void check_compatible(const Ring& ring, const ModPoly& f) {
  if (f.size() != ring.n() || f.modulus != ring.modulus()) {
    throw UsageError("polynomial does not belong to this ring");
  }
}

namespace {

void check_pair(const Ring& ring, const ModPoly& a, const ModPoly& b) {
  check_compatible(ring, a);
  check_compatible(ring, b);
  if (a.domain != b.domain) throw UsageError("domain mismatch");
}

}  // namespace

ModPoly ntt_forward(const Ring& ring, const ModPoly& f) {
  check_compatible(ring, f);
  if (f.domain != Domain::kCoefficient) {
    throw UsageError("ntt_forward expects coefficient domain");
  }
  ModPoly out = f;
  ring.ntt_inplace(out.coeffs);
  out.domain = Domain::kEvaluation;
  return out;
}

ModPoly ntt_inverse(const Ring& ring, const ModPoly& f) {
  check_compatible(ring, f);
  if (f.domain != Domain::kEvaluation) {
    throw UsageError("ntt_inverse expects evaluation domain");
  }
  ModPoly out = f;
  ring.intt_inplace(out.coeffs);
  out.domain = Domain::kCoefficient;
  return out;
}

ModPoly poly_add(const Ring& ring, const ModPoly& a, const ModPoly& b) {
  ModPoly out = a;
  poly_add_inplace(ring, out, b);
  return out;
}

ModPoly poly_sub(const Ring& ring, const ModPoly& a, const ModPoly& b) {
  ModPoly out = a;
  poly_sub_inplace(ring, out, b);
  return out;
}

void poly_add_inplace(const Ring& ring, ModPoly& a, const ModPoly& b) {
  check_pair(ring, a, b);
  const u64 q = ring.modulus();
  u64* x = a.coeffs.data();
  const u64* y = b.coeffs.data();
  const u64 n = ring.n();
  for (u64 i = 0; i < n; ++i) {
    u64 s = x[i] + y[i];
    x[i] = s >= q ? s - q : s;
  }
}

void poly_sub_inplace(const Ring& ring, ModPoly& a, const ModPoly& b) {
  check_pair(ring, a, b);
  const u64 q = ring.modulus();
  u64* x = a.coeffs.data();
  const u64* y = b.coeffs.data();
  const u64 n = ring.n();
  for (u64 i = 0; i < n; ++i) {
    u64 s = x[i] + q - y[i];
    x[i] = s >= q ? s - q : s;
  }
}

ModPoly poly_neg(const Ring& ring, const ModPoly& a) {
  check_compatible(ring, a);
  ModPoly out = a;
  const u64 q = ring.modulus();
  for (auto& c : out.coeffs) c = c == 0 ? 0 : q - c;
  return out;
}

ModPoly poly_scalar_mul(const Ring& ring, const ModPoly& a, u64 scalar) {
  check_compatible(ring, a);
  const Modulus& mod = ring.mod();
  const u64 q = mod.value();
  u64 w = mod.reduce(scalar);
  u64 wp = mod.shoup(w);
  ModPoly out = a;
  for (auto& c : out.coeffs) c = mul_shoup(c, w, wp, q);
  op_counters().modmul_coeffs += a.size();
  return out;
}

ModPoly poly_pointwise(const Ring& ring, const ModPoly& a, const ModPoly& b) {
  check_pair(ring, a, b);
  if (a.domain != Domain::kEvaluation) {
    throw UsageError("pointwise product needs evaluation domain");
  }
  const Modulus& mod = ring.mod();
  ModPoly out(ring.n(), ring.modulus(), Domain::kEvaluation);
  for (u64 i = 0; i < ring.n(); ++i) out[i] = mod.mul(a[i], b[i]);
  op_counters().modmul_coeffs += ring.n();
  return out;
}

ModPoly negacyclic_mul(const Ring& ring, const ModPoly& f, const ModPoly& g) {
  check_compatible(ring, f);
  check_compatible(ring, g);
  ModPoly fe = f.domain == Domain::kEvaluation ? f : ntt_forward(ring, f);
  ModPoly ge = g.domain == Domain::kEvaluation ? g : ntt_forward(ring, g);
  ModPoly h = poly_pointwise(ring, fe, ge);
  return f.domain == Domain::kEvaluation ? h : ntt_inverse(ring, h);
}

void monomial_mul_into(const ModPoly& f, i64 shift, ModPoly& out) {
  const u64 n = f.size();
  const u64 q = f.modulus;
  const i64 two_n = static_cast<i64>(2 * n);
  i64 s = shift % two_n;
  if (s < 0) s += two_n;
  bool negate_all = false;
  if (static_cast<u64>(s) >= n) {
    s -= static_cast<i64>(n);
    negate_all = true;
  }
  const u64 k = static_cast<u64>(s);
  out.coeffs.resize(n);
  out.domain = f.domain;
  out.modulus = q;
  const u64* src = f.coeffs.data();
  u64* dst = out.coeffs.data();
  // out[i] = f[i + k] for i < n - k, -f[i + k - n] after the wrap.
  if (!negate_all) {
    std::copy(src + k, src + n, dst);
    for (u64 i = 0; i < k; ++i) {
      u64 c = src[i];
      dst[n - k + i] = c == 0 ? 0 : q - c;
    }
  } else {
    for (u64 i = 0; i < n - k; ++i) {
      u64 c = src[i + k];
      dst[i] = c == 0 ? 0 : q - c;
    }
    std::copy(src, src + k, dst + (n - k));
  }
  op_counters().monomial_moves += n;
}

ModPoly monomial_mul(const ModPoly& f, i64 shift) {
  if (f.domain != Domain::kCoefficient) {
    throw UsageError("monomial_mul expects coefficient domain");
  }
  ModPoly out;
  monomial_mul_into(f, shift, out);
  return out;
}

u64 galois_element(u64 n, i64 step) {
  const i64 row = static_cast<i64>(n / 2);
  i64 s = step % row;
  if (s < 0) s += row;
  u64 g = 1;
  for (i64 i = 0; i < s; ++i) g = (g * 3) % (2 * n);
  return g;
}

ModPoly automorphism_galois(const ModPoly& f, u64 g) {
  if (f.domain != Domain::kCoefficient) {
    throw UsageError("automorphism expects coefficient domain");
  }
  const u64 n = f.size();
  const u64 q = f.modulus;
  if (g % 2 == 0) throw UsageError("galois element must be odd");
  ModPoly out(n, q, Domain::kCoefficient);
  for (u64 i = 0; i < n; ++i) {
    u64 e = (i * g) % (2 * n);
    u64 c = f[i];
    if (e < n) {
      out[e] = c;
    } else {
      out[e - n] = c == 0 ? 0 : q - c;
    }
  }
  return out;
}

ModPoly automorphism(const ModPoly& f, i64 step) {
  return automorphism_galois(f, galois_element(f.size(), step));
}

std::vector<u32> automorphism_eval_permutation(const Ring& ring, u64 g) {
  const u64 n = ring.n();
  std::vector<u32> perm(n);
  for (u64 i = 0; i < n; ++i) {
    u64 e = (ring.eval_exponent(i) * g) % (2 * n);
    perm[i] = static_cast<u32>(ring.eval_index(e));
  }
  return perm;
}

ModPoly apply_permutation(const ModPoly& f, const std::vector<u32>& perm) {
  ModPoly out(f.size(), f.modulus, f.domain);
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = f[perm[i]];
  return out;
}

}  // namespace flash
