#include "flash/net/frame.hpp"

#include <cstring>
#include <string>

namespace flash {

const char* frame_kind_name(FrameKind kind) {
  switch (kind) {
    case FrameKind::kHandshake: return "handshake";
    case FrameKind::kConvResult: return "conv-result";
    case FrameKind::kActRound: return "act-round";
    case FrameKind::kControl: return "control";
    case FrameKind::kInput: return "input";
    case FrameKind::kRescale: return "rescale";
  }
  return "unknown";
}

namespace {

void store_u32(u8* p, u32 v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<u8>(v >> (8 * i));
}

u32 load_u32(const u8* p) {
  u32 v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<u32>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_frame_header(std::span<u8, kFrameHeaderBytes> out, const Frame& f) {
  if (f.payload.size() > kMaxFramePayload) throw FormatError("frame payload too large");
  store_u32(out.data(), static_cast<u32>(f.payload.size()));
  out[4] = static_cast<u8>(f.kind);
  store_u32(out.data() + 5, f.layer_id);
  store_u32(out.data() + 9, f.seq);
}

FrameHeader read_frame_header(std::span<const u8, kFrameHeaderBytes> in) {
  FrameHeader h;
  h.length = load_u32(in.data());
  if (h.length > kMaxFramePayload) {
    throw FormatError("frame length " + std::to_string(h.length) + " too large");
  }
  if (in[4] > static_cast<u8>(FrameKind::kRescale)) {
    throw FormatError("unknown frame kind " + std::to_string(in[4]));
  }
  h.kind = static_cast<FrameKind>(in[4]);
  h.layer_id = load_u32(in.data() + 5);
  h.seq = load_u32(in.data() + 9);
  return h;
}

std::vector<u8> encode_frame(const Frame& f) {
  std::vector<u8> out(f.wire_size());
  write_frame_header(std::span<u8, kFrameHeaderBytes>(out.data(), kFrameHeaderBytes), f);
  if (!f.payload.empty()) {
    std::memcpy(out.data() + kFrameHeaderBytes, f.payload.data(), f.payload.size());
  }
  return out;
}

Frame decode_frame(std::span<const u8> bytes) {
  if (bytes.size() < kFrameHeaderBytes) throw FormatError("truncated frame header");
  FrameHeader h = read_frame_header(bytes.first<kFrameHeaderBytes>());
  if (bytes.size() != kFrameHeaderBytes + h.length) {
    throw FormatError("frame length does not match payload");
  }
  Frame f{h.kind, h.layer_id, h.seq, {}};
  f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.end());
  return f;
}

}  // namespace flash
