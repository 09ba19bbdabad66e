#pragma once

#include <span>
#include <vector>

#include "flash/bfv/ciphertext.hpp"

namespace flash {

// Little-endian helpers shared by all wire formats.
void put_u8(std::vector<u8>& out, u8 v);
void put_u32(std::vector<u8>& out, u32 v);
void put_u64(std::vector<u8>& out, u64 v);

class Reader {
 public:
  explicit Reader(std::span<const u8> data) : data_(data) {}
  u8 u8_();
  u32 u32_();
  u64 u64_();
  std::span<const u8> bytes(std::size_t count);
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const u8> data_;
  std::size_t pos_ = 0;
};

// u32 coefficient count, then count x u64 LE. Coefficient domain only.
void write_modpoly(std::vector<u8>& out, const ModPoly& f);
ModPoly read_modpoly(Reader& in, u64 modulus);

// u32 body length | encoding u8 | domain u8 | fresh u8 | c0 (n x u64 LE)
// | 32-byte seed when fresh, else c1 (n x u64 LE).
// compress=false always writes c1 and clears the fresh byte.
void write_ciphertext(std::vector<u8>& out, const Ciphertext& ct, bool compress);
std::vector<u8> serialize_ciphertext(const Ciphertext& ct, bool compress);
Ciphertext read_ciphertext(const Context& ctx, Reader& in);
Ciphertext deserialize_ciphertext(const Context& ctx, std::span<const u8> bytes);

// Encoded size of a ciphertext, including the length prefix.
std::size_t ciphertext_wire_size(u64 n, bool seed_form);

}  // namespace flash
