#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flash {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i8 = std::int8_t;
using i32 = std::int32_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;
using i128 = __int128;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent ring / scheme parameters.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// API misuse: mismatched moduli, sizes, domains.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Operation applied to a ciphertext of the wrong encoding.
class EncodingError : public Error {
 public:
  using Error::Error;
};

// Mask or zero-ciphertext reuse, out-of-order protocol rounds.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DecryptionError : public Error {
 public:
  using Error::Error;
};

// Lazy accumulation or fixed-point range would be exceeded.
class OverflowError : public Error {
 public:
  using Error::Error;
};

class KeyError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized data, model files, frames.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class HandshakeError : public Error {
 public:
  using Error::Error;
};

}  // namespace flash
