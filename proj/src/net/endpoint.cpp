#include "flash/net/endpoint.hpp"

#include <array>
#include <string>

#include "flash/bfv/serialize.hpp"

namespace flash {

Endpoint::Endpoint(std::unique_ptr<Transport> transport)
    : transport_(std::move(transport)) {}

void Endpoint::send(FrameKind kind, u32 layer_id, std::vector<u8> payload) {
  std::lock_guard lock(send_mu_);
  Frame f{kind, layer_id, send_seq_[{static_cast<u8>(kind), layer_id}]++,
          std::move(payload)};
  transport_->write(encode_frame(f));
  std::lock_guard slock(stats_mu_);
  stats_.account(f, phase_, Direction::kSent);
}

Frame Endpoint::recv() {
  std::lock_guard lock(recv_mu_);
  std::array<u8, kFrameHeaderBytes> head;
  transport_->read(head);
  FrameHeader h = read_frame_header(head);
  Frame f{h.kind, h.layer_id, h.seq, std::vector<u8>(h.length)};
  transport_->read(f.payload);
  u32& want = recv_seq_[{static_cast<u8>(h.kind), h.layer_id}];
  if (h.seq != want) {
    throw ProtocolError(std::string("out-of-sequence ") + frame_kind_name(h.kind) +
                        " frame for layer " + std::to_string(h.layer_id) + ": got " +
                        std::to_string(h.seq) + ", expected " + std::to_string(want));
  }
  ++want;
  std::lock_guard slock(stats_mu_);
  stats_.account(f, phase_, Direction::kReceived);
  return f;
}

Frame Endpoint::expect(FrameKind kind, u32 layer_id) {
  Frame f = recv();
  if (f.kind == FrameKind::kControl && kind != FrameKind::kControl) {
    throw ProtocolError("peer aborted: " +
                        std::string(f.payload.begin(), f.payload.end()));
  }
  if (f.kind != kind || f.layer_id != layer_id) {
    throw ProtocolError(std::string("expected ") + frame_kind_name(kind) +
                        " frame for layer " + std::to_string(layer_id) + ", got " +
                        frame_kind_name(f.kind) + " for layer " +
                        std::to_string(f.layer_id));
  }
  return f;
}

std::vector<u8> encode_handshake(const Handshake& h) {
  std::vector<u8> out = {'F', 'L', 'S', 'H'};
  put_u8(out, h.version);
  put_u64(out, h.n);
  put_u64(out, h.q);
  put_u64(out, h.p);
  put_u32(out, h.frac_bits);
  return out;
}

Handshake decode_handshake(std::span<const u8> payload) {
  Reader r(payload);
  auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "FLSH") {
    throw HandshakeError("bad handshake magic");
  }
  Handshake h;
  h.version = r.u8_();
  h.n = r.u64_();
  h.q = r.u64_();
  h.p = r.u64_();
  h.frac_bits = r.u32_();
  if (r.remaining() != 0) throw HandshakeError("trailing handshake bytes");
  return h;
}

void exchange_handshake(Endpoint& ep, const Handshake& mine) {
  ep.send(FrameKind::kHandshake, 0, encode_handshake(mine));
  Handshake theirs = decode_handshake(ep.expect(FrameKind::kHandshake, 0).payload);
  auto check = [](const char* what, u64 a, u64 b) {
    if (a != b) {
      throw HandshakeError(std::string("peer ") + what + " " + std::to_string(b) +
                           " differs from local " + std::to_string(a));
    }
  };
  check("protocol version", mine.version, theirs.version);
  check("n", mine.n, theirs.n);
  check("q", mine.q, theirs.q);
  check("p", mine.p, theirs.p);
  check("fraction bits", mine.frac_bits, theirs.frac_bits);
}

void send_ciphertexts(Endpoint& ep, FrameKind kind, u32 layer_id, u8 round,
                      const std::vector<Ciphertext>& cts, bool compress) {
  for (std::size_t i = 0; i < cts.size(); ++i) {
    std::vector<u8> payload;
    put_u8(payload, round);
    put_u32(payload, static_cast<u32>(i));
    write_ciphertext(payload, cts[i], compress);
    ep.send(kind, layer_id, std::move(payload));
  }
}

std::vector<Ciphertext> recv_ciphertexts(Endpoint& ep, const Context& ctx,
                                         FrameKind kind, u32 layer_id, u8 round,
                                         std::size_t count) {
  std::vector<Ciphertext> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Frame f = ep.expect(kind, layer_id);
    Reader r(f.payload);
    u8 got_round = r.u8_();
    u32 index = r.u32_();
    if (got_round != round || index != i) {
      throw ProtocolError("layer " + std::to_string(layer_id) + ": expected round " +
                          std::to_string(round) + " ciphertext " + std::to_string(i) +
                          ", got round " + std::to_string(got_round) + " ciphertext " +
                          std::to_string(index));
    }
    out.push_back(read_ciphertext(ctx, r));
    if (r.remaining() != 0) throw FormatError("trailing bytes after ciphertext");
  }
  return out;
}

}  // namespace flash
