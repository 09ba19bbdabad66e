#pragma once

#include <memory>

#include "flash/bfv/evaluator.hpp"
#include "flash/conv/layout.hpp"

namespace flash {

// Fixed-point rules for the x^2 + x activation. A value with `scale`
// fraction bits and `int_bits` integer bits squares to 2 * scale fraction
// bits; the result, and the masked truncation that follows, must stay
// inside a quarter of the plaintext range.
struct FixedPointCodec {
  int frac_bits = 6;
  int int_bits = 0;
  u64 p = 0;

  i64 encode(double x, int scale) const;
  double decode(i64 v, int scale) const;
  // Largest magnitude the rescale round handles without wraparound.
  u64 rescale_bound() const { return (p - 1) / 4; }
  // Throws ParameterError when an activation at `input_scale` could leave
  // the signed window (a quarter of it when rescaling).
  void check_activation(int input_scale, bool rescale) const;
  // Bits dropped by the rescale after an activation at `input_scale`.
  int truncation_bits(int input_scale) const { return 2 * input_scale - frac_bits; }
};

// Gather from source ciphertext slots into destination slots, used to
// repack an activation into the layout of its consumer. Unmapped
// destination slots are zero.
struct SlotMap {
  u32 src_count = 0;
  u32 dst_count = 0;
  u32 n = 0;
  std::vector<std::vector<i64>> from;  // [dst][slot] -> src * n + slot, or -1

  static SlotMap identity(u32 count, u32 n);
  std::vector<MessageVec> apply(const std::vector<MessageVec>& src) const;
};

SlotMap relayout_map(const Layout& src, const Layout& dst);

enum class ActRound : u8 { kInit = 0, kMasked = 1, kCrossSent = 2, kDone = 3 };

// Server state for one run of the activation protocol over a group of
// ciphertexts. Masks are drawn at construction (offline) and used once.
class ActivationSession {
 public:
  ActivationSession(ContextPtr ctx, u32 layer_id, SlotMap map, int input_scale,
                    Prng& prng, bool zero_masks = false);

  u32 layer_id() const { return layer_id_; }
  ActRound round() const { return round_; }
  const SlotMap& map() const { return map_; }
  int input_scale() const { return scale_; }

  // [a + r]: plaintext addition, no key needed.
  std::vector<Ciphertext> server_round1(const std::vector<Ciphertext>& conv_out);
  // [2 a'r' + 2 r'^2 + v] from the client's batch [a' + r'].
  std::vector<Ciphertext> server_round2(const std::vector<Ciphertext>& masked_batch);
  // [a'^2 + a' 2^s] from [w'^2 + w' 2^s] and the re-encrypted round-2 value.
  std::vector<Ciphertext> server_finalize(const std::vector<Ciphertext>& square,
                                          const std::vector<Ciphertext>& cross);

  // Mask access for tests.
  const std::vector<MessageVec>& source_masks() const { return r_; }
  const std::vector<MessageVec>& dest_masks() const { return r_dst_; }
  const std::vector<MessageVec>& dest_masks_sq() const { return r_dst_sq_; }
  const std::vector<MessageVec>& blind() const { return v_; }

 private:
  void expect(ActRound r, const char* op) const;

  ContextPtr ctx_;
  u32 layer_id_;
  SlotMap map_;
  int scale_;
  ActRound round_ = ActRound::kInit;
  std::vector<MessageVec> r_, r_dst_, r_dst_sq_, v_;
};

struct ClientRound1 {
  std::vector<Ciphertext> square;        // direct [w'^2 + w' 2^s]
  std::vector<Ciphertext> masked_batch;  // batch [w']
};

// Client calls record the noise budget of every ciphertext they decrypt
// into `budgets` when given.
ClientRound1 client_round1(const Context& ctx, const std::vector<Ciphertext>& masked,
                           const SecretKey& sk, ZeroPool& pool, const SlotMap& map,
                           int input_scale, std::vector<int>* budgets = nullptr);
// Decrypts batch ciphertexts and re-encrypts the values directly encoded.
std::vector<Ciphertext> client_round2(const Context& ctx,
                                      const std::vector<Ciphertext>& msgs,
                                      const SecretKey& sk, ZeroPool& pool,
                                      std::vector<int>* budgets = nullptr);

// Truncation of [z] by 2^k with |z| < (p-1)/4. The server masks z with
// uniform r; the client returns floor(y / 2^k) and floor((y + d) / 2^k)
// for y = z + r and d = (p-1)/2, one of which never wrapped. The server
// picks that one slot-wise (its choice depends on r alone) and removes the
// truncated mask. Result is floor(z / 2^k) or one more.
class RescaleSession {
 public:
  RescaleSession(ContextPtr ctx, u32 layer_id, u32 count, int bits, Prng& prng);

  int bits() const { return bits_; }
  std::vector<Ciphertext> server_mask(const std::vector<Ciphertext>& z);
  std::vector<Ciphertext> server_select(const std::vector<Ciphertext>& low,
                                        const std::vector<Ciphertext>& diff);
  std::vector<Ciphertext> server_unmask(const std::vector<Ciphertext>& direct);

 private:
  ContextPtr ctx_;
  u32 layer_id_;
  int bits_;
  int stage_ = 0;
  std::vector<MessageVec> r_, v_;
};

struct ClientRescale {
  std::vector<Ciphertext> low;   // batch floor(((y + d) mod p) / 2^k)
  std::vector<Ciphertext> diff;  // batch floor(y / 2^k) - low
};

ClientRescale client_rescale(const Context& ctx, const std::vector<Ciphertext>& masked,
                             const SecretKey& sk, ZeroPool& pool, int bits,
                             std::vector<int>* budgets = nullptr);

// Offline phase, no communication. The server samples `count` sessions;
// the client precomputes the zero ciphertexts those runs will consume. A
// pool that runs dry raises ProtocolError rather than reusing anything.
std::vector<ActivationSession> offline_prepare(ContextPtr ctx, std::size_t count, u32 layer_id,
                                               const SlotMap& map, int input_scale,
                                               Prng& prng);
ZeroPool offline_prepare_client(const Context& ctx, const SecretKey& sk, std::size_t count,
                                Prng& prng);

// Plaintext reference for one activation at scale s: a^2 + a 2^s mod p.
u64 activation_oracle(const Context& ctx, i64 a, int input_scale);

// Number of online encryptions a client spends per destination ciphertext.
inline constexpr std::size_t kZerosPerActivation = 3;
inline constexpr std::size_t kZerosPerRescale = 3;

}  // namespace flash
