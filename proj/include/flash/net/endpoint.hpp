#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "flash/bfv/ciphertext.hpp"
#include "flash/net/transcript.hpp"
#include "flash/net/transport.hpp"

namespace flash {

// Framed messaging over a transport. Sequence numbers are assigned per
// (kind, layer) and checked on receipt; every frame is accounted once.
class Endpoint {
 public:
  explicit Endpoint(std::unique_ptr<Transport> transport);

  void send(FrameKind kind, u32 layer_id, std::vector<u8> payload);
  Frame recv();
  // Receives and checks kind and layer; ProtocolError otherwise.
  Frame expect(FrameKind kind, u32 layer_id);

  void set_phase(Phase p) { phase_ = p; }
  Phase phase() const { return phase_; }
  TranscriptStats& stats() { return stats_; }
  const TranscriptStats& stats() const { return stats_; }
  void close() { transport_->close(); }
  std::string describe() const { return transport_->describe(); }

 private:
  using Key = std::pair<u8, u32>;
  std::unique_ptr<Transport> transport_;
  std::mutex send_mu_, recv_mu_, stats_mu_;
  std::map<Key, u32> send_seq_;
  std::map<Key, u32> recv_seq_;
  Phase phase_ = Phase::kOnline;
  TranscriptStats stats_;
};

inline constexpr u8 kProtocolVersion = 1;

// Parameters both parties must agree on before any ciphertext moves.
struct Handshake {
  u8 version = kProtocolVersion;
  u64 n = 0, q = 0, p = 0;
  u32 frac_bits = 0;
};

std::vector<u8> encode_handshake(const Handshake& h);
Handshake decode_handshake(std::span<const u8> payload);
// Sends ours, reads theirs; HandshakeError naming the first mismatch.
void exchange_handshake(Endpoint& ep, const Handshake& mine);

// One frame per ciphertext: u8 round | u32 ct_index | ciphertext.
void send_ciphertexts(Endpoint& ep, FrameKind kind, u32 layer_id, u8 round,
                      const std::vector<Ciphertext>& cts, bool compress);
std::vector<Ciphertext> recv_ciphertexts(Endpoint& ep, const Context& ctx,
                                         FrameKind kind, u32 layer_id, u8 round,
                                         std::size_t count);

}  // namespace flash
