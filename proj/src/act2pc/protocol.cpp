#include "flash/act2pc/protocol.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace flash {

i64 FixedPointCodec::encode(double x, int scale) const {
  return static_cast<i64>(std::llround(std::ldexp(x, scale)));
}

double FixedPointCodec::decode(i64 v, int scale) const {
  return std::ldexp(static_cast<double>(v), -scale);
}

void FixedPointCodec::check_activation(int input_scale, bool rescale) const {
  if (input_scale < 0 || int_bits < 0) throw ParameterError("negative scale");
  // |a^2 + a 2^s| < 2^(2(s + int_bits) + 1).
  const int need = 2 * (input_scale + int_bits) + 1;
  const u64 bound = rescale ? rescale_bound() : (p - 1) / 2;
  if (need >= 63 || (u64{1} << need) > bound) {
    throw ParameterError("activation at scale " + std::to_string(input_scale) +
                         " needs " + std::to_string(need) +
                         " bits, plaintext window allows " +
                         std::to_string(std::bit_width(bound) - 1));
  }
  if (rescale && truncation_bits(input_scale) < 0) {
    throw ParameterError("activation scale below the codec scale");
  }
}

SlotMap SlotMap::identity(u32 count, u32 n) {
  SlotMap m;
  m.src_count = m.dst_count = count;
  m.n = n;
  m.from.assign(count, std::vector<i64>(n));
  for (u32 c = 0; c < count; ++c) {
    for (u32 i = 0; i < n; ++i) m.from[c][i] = static_cast<i64>(c) * n + i;
  }
  return m;
}

std::vector<MessageVec> SlotMap::apply(const std::vector<MessageVec>& src) const {
  if (src.size() != src_count) throw UsageError("slot map source count mismatch");
  std::vector<MessageVec> out(dst_count, MessageVec(n, 0));
  for (u32 d = 0; d < dst_count; ++d) {
    for (u32 i = 0; i < n; ++i) {
      i64 f = from[d][i];
      if (f >= 0) out[d][i] = src[f / n][f % n];
    }
  }
  return out;
}

SlotMap relayout_map(const Layout& src, const Layout& dst) {
  if (src.channels != dst.channels || src.height != dst.height ||
      src.width != dst.width) {
    throw UsageError("relayout between different shapes");
  }
  const u32 n = src.lane_size * src.lanes;
  if (dst.lane_size * dst.lanes != n) throw UsageError("relayout across rings");
  SlotMap m;
  m.src_count = src.ct_count;
  m.dst_count = dst.ct_count;
  m.n = n;
  m.from.assign(dst.ct_count, std::vector<i64>(n, -1));
  auto sources = slot_sources(dst);
  const u32 hw = dst.height * dst.width;
  for (u32 d = 0; d < dst.ct_count; ++d) {
    for (const SlotSource& s : sources[d]) {
      u32 c = s.index / hw, y = s.index % hw / dst.width, x = s.index % dst.width;
      SlotRef r = src.locate(c, y, x);
      m.from[d][s.slot] = static_cast<i64>(r.ct) * n + r.slot;
    }
  }
  return m;
}

namespace {

MessageVec uniform_vec(const Context& ctx, Prng& prng) {
  MessageVec m(ctx.n());
  for (auto& v : m) v = prng.uniform(ctx.p());
  return m;
}

void require_count(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ProtocolError(std::string(what) + ": expected " + std::to_string(want) +
                        " ciphertexts, got " + std::to_string(got));
  }
}

std::vector<MessageVec> decrypt_all(const Context& ctx,
                                    const std::vector<Ciphertext>& cts,
                                    const SecretKey& sk, std::vector<int>* budgets) {
  std::vector<MessageVec> out;
  out.reserve(cts.size());
  for (const Ciphertext& ct : cts) {
    DecryptResult r = decrypt_with_budget(ctx, ct, sk);
    if (r.budget <= 0) throw DecryptionError("noise budget exhausted");
    if (budgets) budgets->push_back(r.budget);
    out.push_back(decode(ctx, r.pt));
  }
  return out;
}

}  // namespace

ActivationSession::ActivationSession(ContextPtr ctx, u32 layer_id, SlotMap map,
                                     int input_scale, Prng& prng, bool zero_masks)
    : ctx_(std::move(ctx)), layer_id_(layer_id), map_(std::move(map)),
      scale_(input_scale) {
  const Context& c = *ctx_;
  if (map_.n != c.n()) throw UsageError("slot map built for another ring");
  const Modulus& pm = c.p_ring().mod();
  for (u32 i = 0; i < map_.src_count; ++i) {
    r_.push_back(zero_masks ? MessageVec(c.n(), 0) : uniform_vec(c, prng));
  }
  r_dst_ = map_.apply(r_);
  for (const MessageVec& r : r_dst_) {
    MessageVec sq(c.n());
    for (u64 i = 0; i < c.n(); ++i) sq[i] = pm.mul(r[i], r[i]);
    r_dst_sq_.push_back(std::move(sq));
    v_.push_back(zero_masks ? MessageVec(c.n(), 0) : uniform_vec(c, prng));
  }
}

void ActivationSession::expect(ActRound r, const char* op) const {
  if (round_ != r) {
    throw ProtocolError(std::string(op) + " out of order for layer " +
                        std::to_string(layer_id_));
  }
}

std::vector<Ciphertext> ActivationSession::server_round1(
    const std::vector<Ciphertext>& conv_out) {
  expect(ActRound::kInit, "server_round1");
  require_count(conv_out.size(), map_.src_count, "server_round1");
  std::vector<Ciphertext> out;
  for (std::size_t i = 0; i < conv_out.size(); ++i) {
    if (conv_out[i].encoding != Encoding::kDirect) {
      throw EncodingError("activation input must be directly encoded");
    }
    Ciphertext ct = conv_out[i].domain() == Domain::kCoefficient
                        ? conv_out[i]
                        : to_coeff(*ctx_, conv_out[i]);
    out.push_back(plain_add(*ctx_, ct, encode_direct(*ctx_, r_[i])));
  }
  round_ = ActRound::kMasked;
  return out;
}

std::vector<Ciphertext> ActivationSession::server_round2(
    const std::vector<Ciphertext>& masked_batch) {
  expect(ActRound::kMasked, "server_round2");
  require_count(masked_batch.size(), map_.dst_count, "server_round2");
  const Context& c = *ctx_;
  const Modulus& pm = c.p_ring().mod();
  std::vector<Ciphertext> out;
  for (std::size_t d = 0; d < masked_batch.size(); ++d) {
    MessageVec two_r(c.n());
    for (u64 i = 0; i < c.n(); ++i) two_r[i] = pm.add(r_dst_[d][i], r_dst_[d][i]);
    Ciphertext prod = pmult(c, to_eval(c, masked_batch[d]), encode_batch(c, two_r));
    prod = to_coeff(c, prod);
    out.push_back(plain_add(c, prod, encode_batch(c, v_[d])));
  }
  round_ = ActRound::kCrossSent;
  return out;
}

std::vector<Ciphertext> ActivationSession::server_finalize(
    const std::vector<Ciphertext>& square, const std::vector<Ciphertext>& cross) {
  expect(ActRound::kCrossSent, "server_finalize");
  require_count(square.size(), map_.dst_count, "server_finalize");
  require_count(cross.size(), map_.dst_count, "server_finalize");
  const Context& c = *ctx_;
  const Modulus& pm = c.p_ring().mod();
  const u64 shift = pm.pow(2, static_cast<u64>(scale_));
  std::vector<Ciphertext> out;
  for (std::size_t d = 0; d < square.size(); ++d) {
    // (w^2 + w 2^s) - (2ar + 2r^2 + v) + (r^2 - r 2^s + v) = a^2 + a 2^s.
    MessageVec fix(c.n());
    for (u64 i = 0; i < c.n(); ++i) {
      u64 t = pm.sub(r_dst_sq_[d][i], pm.mul(r_dst_[d][i], shift));
      fix[i] = pm.add(t, v_[d][i]);
    }
    out.push_back(plain_add(c, psub(c, square[d], cross[d]), encode_direct(c, fix)));
  }
  round_ = ActRound::kDone;
  r_.clear();
  r_dst_.clear();
  r_dst_sq_.clear();
  v_.clear();
  return out;
}

ClientRound1 client_round1(const Context& ctx, const std::vector<Ciphertext>& masked,
                           const SecretKey& sk, ZeroPool& pool, const SlotMap& map,
                           int input_scale, std::vector<int>* budgets) {
  if (pool.size() < 2 * map.dst_count) {
    throw ProtocolError("zero-ciphertext pool exhausted");
  }
  std::vector<MessageVec> w = map.apply(decrypt_all(ctx, masked, sk, budgets));
  const Modulus& pm = ctx.p_ring().mod();
  const u64 shift = pm.pow(2, static_cast<u64>(input_scale));
  ClientRound1 out;
  for (const MessageVec& m : w) {
    MessageVec sq(ctx.n());
    for (u64 i = 0; i < ctx.n(); ++i) {
      sq[i] = pm.add(pm.mul(m[i], m[i]), pm.mul(m[i], shift));
    }
    ZeroCiphertext z1 = pool.take();
    out.square.push_back(encrypt_online(ctx, encode_direct(ctx, sq), z1));
    ZeroCiphertext z2 = pool.take();
    out.masked_batch.push_back(encrypt_online(ctx, encode_batch(ctx, m), z2));
  }
  return out;
}

std::vector<Ciphertext> client_round2(const Context& ctx,
                                      const std::vector<Ciphertext>& msgs,
                                      const SecretKey& sk, ZeroPool& pool,
                                      std::vector<int>* budgets) {
  if (pool.size() < msgs.size()) throw ProtocolError("zero-ciphertext pool exhausted");
  std::vector<Ciphertext> out;
  for (const MessageVec& m : decrypt_all(ctx, msgs, sk, budgets)) {
    ZeroCiphertext z = pool.take();
    out.push_back(encrypt_online(ctx, encode_direct(ctx, m), z));
  }
  return out;
}

RescaleSession::RescaleSession(ContextPtr ctx, u32 layer_id, u32 count, int bits,
                               Prng& prng)
    : ctx_(std::move(ctx)), layer_id_(layer_id), bits_(bits) {
  if (bits < 0 || bits >= 30) throw ParameterError("bad truncation width");
  for (u32 i = 0; i < count; ++i) {
    r_.push_back(uniform_vec(*ctx_, prng));
    v_.push_back(uniform_vec(*ctx_, prng));
  }
}

std::vector<Ciphertext> RescaleSession::server_mask(const std::vector<Ciphertext>& z) {
  if (stage_ != 0) throw ProtocolError("rescale mask already used");
  require_count(z.size(), r_.size(), "rescale");
  std::vector<Ciphertext> out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i].encoding != Encoding::kDirect) {
      throw EncodingError("rescale input must be directly encoded");
    }
    out.push_back(plain_add(*ctx_, z[i], encode_direct(*ctx_, r_[i])));
  }
  stage_ = 1;
  return out;
}

std::vector<Ciphertext> RescaleSession::server_select(
    const std::vector<Ciphertext>& low, const std::vector<Ciphertext>& diff) {
  if (stage_ != 1) throw ProtocolError("rescale select out of order");
  require_count(low.size(), r_.size(), "rescale");
  require_count(diff.size(), r_.size(), "rescale");
  const Context& c = *ctx_;
  const Modulus& pm = c.p_ring().mod();
  const u64 p = c.p();
  const u64 bound = (p - 1) / 4;
  const u64 half = (p - 1) / 2;
  std::vector<Ciphertext> out;
  for (std::size_t k = 0; k < low.size(); ++k) {
    MessageVec sel(c.n()), fix(c.n());
    for (u64 i = 0; i < c.n(); ++i) {
      u64 r = r_[k][i];
      // y = z + r never wraps when r is at least `bound` from both ends;
      // otherwise y + half does not.
      bool direct = r >= bound && r < p - bound;
      u64 used = direct ? r : pm.add(r, half);
      sel[i] = direct ? 1 : 0;
      fix[i] = pm.sub(v_[k][i], used >> bits_);
    }
    Ciphertext pick = to_coeff(c, pmult(c, to_eval(c, diff[k]), encode_batch(c, sel)));
    Ciphertext res = hadd(c, low[k].domain() == Domain::kCoefficient ? low[k]
                                                                     : to_coeff(c, low[k]),
                          pick);
    out.push_back(plain_add(c, res, encode_batch(c, fix)));
  }
  stage_ = 2;
  return out;
}

std::vector<Ciphertext> RescaleSession::server_unmask(
    const std::vector<Ciphertext>& direct) {
  if (stage_ != 2) throw ProtocolError("rescale unmask out of order");
  require_count(direct.size(), v_.size(), "rescale");
  const Modulus& pm = ctx_->p_ring().mod();
  std::vector<Ciphertext> out;
  for (std::size_t k = 0; k < direct.size(); ++k) {
    MessageVec neg(ctx_->n());
    for (u64 i = 0; i < ctx_->n(); ++i) neg[i] = pm.neg(v_[k][i]);
    out.push_back(plain_add(*ctx_, direct[k], encode_direct(*ctx_, neg)));
  }
  stage_ = 3;
  r_.clear();
  v_.clear();
  return out;
}

ClientRescale client_rescale(const Context& ctx, const std::vector<Ciphertext>& masked,
                             const SecretKey& sk, ZeroPool& pool, int bits,
                             std::vector<int>* budgets) {
  if (pool.size() < 2 * masked.size()) throw ProtocolError("zero-ciphertext pool exhausted");
  const Modulus& pm = ctx.p_ring().mod();
  const u64 half = (ctx.p() - 1) / 2;
  ClientRescale out;
  for (const MessageVec& y : decrypt_all(ctx, masked, sk, budgets)) {
    MessageVec low(ctx.n()), diff(ctx.n());
    for (u64 i = 0; i < ctx.n(); ++i) {
      u64 t1 = y[i] >> bits;
      u64 t2 = pm.add(y[i], half) >> bits;
      low[i] = t2;
      diff[i] = pm.sub(t1, t2);
    }
    ZeroCiphertext z1 = pool.take();
    out.low.push_back(encrypt_online(ctx, encode_batch(ctx, low), z1));
    ZeroCiphertext z2 = pool.take();
    out.diff.push_back(encrypt_online(ctx, encode_batch(ctx, diff), z2));
  }
  return out;
}

std::vector<ActivationSession> offline_prepare(ContextPtr ctx, std::size_t count, u32 layer_id,
                                               const SlotMap& map, int input_scale,
                                               Prng& prng) {
  std::vector<ActivationSession> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(ctx, layer_id, map, input_scale, prng);
  return out;
}

ZeroPool offline_prepare_client(const Context& ctx, const SecretKey& sk, std::size_t count,
                                Prng& prng) {
  return make_zero_pool(ctx, sk, prng, count * kZerosPerActivation);
}

u64 activation_oracle(const Context& ctx, i64 a, int input_scale) {
  const Modulus& pm = ctx.p_ring().mod();
  u64 m = pm.from_signed(a);
  return pm.add(pm.mul(m, m), pm.mul(m, pm.pow(2, static_cast<u64>(input_scale))));
}

}  // namespace flash
