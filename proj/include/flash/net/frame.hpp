#pragma once

#include <span>
#include <vector>

#include "flash/common.hpp"

namespace flash {

// u32 payload length | u8 kind | u32 layer_id | u32 seq | payload, all LE.
inline constexpr std::size_t kFrameHeaderBytes = 13;
inline constexpr u32 kMaxFramePayload = 1u << 30;

enum class FrameKind : u8 {
  kHandshake = 0,
  kConvResult = 1,
  kActRound = 2,
  kControl = 3,
  kInput = 4,
  kRescale = 5,
};

const char* frame_kind_name(FrameKind kind);

struct Frame {
  FrameKind kind = FrameKind::kControl;
  u32 layer_id = 0;
  u32 seq = 0;
  std::vector<u8> payload;

  std::size_t wire_size() const { return kFrameHeaderBytes + payload.size(); }
  friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameHeader {
  u32 length;
  FrameKind kind;
  u32 layer_id;
  u32 seq;
};

void write_frame_header(std::span<u8, kFrameHeaderBytes> out, const Frame& f);
// Throws FormatError on an unknown kind or oversized length.
FrameHeader read_frame_header(std::span<const u8, kFrameHeaderBytes> in);
std::vector<u8> encode_frame(const Frame& f);
Frame decode_frame(std::span<const u8> bytes);

}  // namespace flash
