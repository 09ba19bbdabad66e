#include "flash/bfv/serialize.hpp"

#include <cstring>

namespace flash {

void put_u8(std::vector<u8>& out, u8 v) { out.push_back(v); }

void put_u32(std::vector<u8>& out, u32 v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

void put_u64(std::vector<u8>& out, u64 v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

std::span<const u8> Reader::bytes(std::size_t count) {
  if (remaining() < count) throw FormatError("truncated input");
  auto s = data_.subspan(pos_, count);
  pos_ += count;
  return s;
}

u8 Reader::u8_() { return bytes(1)[0]; }

u32 Reader::u32_() {
  auto b = bytes(4);
  u32 v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<u32>(b[i]) << (8 * i);
  return v;
}

u64 Reader::u64_() {
  auto b = bytes(8);
  u64 v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<u64>(b[i]) << (8 * i);
  return v;
}

namespace {

void put_coeffs(std::vector<u8>& out, const std::vector<u64>& c) {
  std::size_t at = out.size();
  out.resize(at + c.size() * 8);
  u8* dst = out.data() + at;
  for (u64 v : c) {
    for (int i = 0; i < 8; ++i) *dst++ = static_cast<u8>(v >> (8 * i));
  }
}

std::vector<u64> get_coeffs(Reader& in, std::size_t count, u64 modulus) {
  auto b = in.bytes(count * 8);
  std::vector<u64> c(count);
  for (std::size_t k = 0; k < count; ++k) {
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<u64>(b[8 * k + i]) << (8 * i);
    if (v >= modulus) throw FormatError("coefficient not reduced");
    c[k] = v;
  }
  return c;
}

}  // namespace

void write_modpoly(std::vector<u8>& out, const ModPoly& f) {
  if (f.domain != Domain::kCoefficient) {
    throw UsageError("serialized polynomials are in coefficient domain");
  }
  put_u32(out, static_cast<u32>(f.size()));
  put_coeffs(out, f.coeffs);
}

ModPoly read_modpoly(Reader& in, u64 modulus) {
  u32 count = in.u32_();
  ModPoly f;
  f.modulus = modulus;
  f.domain = Domain::kCoefficient;
  f.coeffs = get_coeffs(in, count, modulus);
  return f;
}

std::size_t ciphertext_wire_size(u64 n, bool seed_form) {
  return 4 + 3 + n * 8 + (seed_form ? 32 : n * 8);
}

void write_ciphertext(std::vector<u8>& out, const Ciphertext& ct, bool compress) {
  const bool seed_form = compress && ct.fresh && ct.domain() == Domain::kCoefficient;
  const u64 n = ct.c0.size();
  put_u32(out, static_cast<u32>(ciphertext_wire_size(n, seed_form) - 4));
  put_u8(out, static_cast<u8>(ct.encoding));
  put_u8(out, static_cast<u8>(ct.domain()));
  put_u8(out, seed_form ? 1 : 0);
  put_coeffs(out, ct.c0.coeffs);
  if (seed_form) {
    out.insert(out.end(), ct.seed.begin(), ct.seed.end());
  } else {
    put_coeffs(out, ct.c1.coeffs);
  }
}

std::vector<u8> serialize_ciphertext(const Ciphertext& ct, bool compress) {
  std::vector<u8> out;
  out.reserve(ciphertext_wire_size(ct.c0.size(), false));
  write_ciphertext(out, ct, compress);
  return out;
}

Ciphertext read_ciphertext(const Context& ctx, Reader& in) {
  const u64 n = ctx.n();
  u32 body = in.u32_();
  u8 enc = in.u8_();
  u8 dom = in.u8_();
  u8 fresh = in.u8_();
  if (enc > 1 || dom > 1 || fresh > 1) throw FormatError("bad ciphertext header");
  if (body != ciphertext_wire_size(n, fresh == 1) - 4) {
    throw FormatError("ciphertext length does not match ring degree");
  }
  if (fresh == 1 && dom != 0) throw FormatError("seed form requires coefficient domain");
  Ciphertext ct;
  ct.encoding = static_cast<Encoding>(enc);
  const Domain d = static_cast<Domain>(dom);
  ct.c0 = ModPoly(n, ctx.q(), d);
  ct.c0.coeffs = get_coeffs(in, n, ctx.q());
  if (fresh == 1) {
    auto s = in.bytes(32);
    std::memcpy(ct.seed.data(), s.data(), 32);
    ct.fresh = true;
    ct.c1 = expand_seed(ct.seed, n, ctx.q());
  } else {
    ct.c1 = ModPoly(n, ctx.q(), d);
    ct.c1.coeffs = get_coeffs(in, n, ctx.q());
  }
  return ct;
}

Ciphertext deserialize_ciphertext(const Context& ctx, std::span<const u8> bytes) {
  Reader in(bytes);
  Ciphertext ct = read_ciphertext(ctx, in);
  if (in.remaining() != 0) throw FormatError("trailing bytes after ciphertext");
  return ct;
}

}  // namespace flash
