#pragma once

#include <functional>
#include <optional>

#include "flash/act2pc/protocol.hpp"
#include "flash/model/model.hpp"
#include "flash/net/endpoint.hpp"

namespace flash {

struct EngineOptions {
  bool lazy = true;
  int threads = 1;
  bool seed_compress = true;
};

// Layouts for one model, derived from the architecture alone so both
// parties compute the same plan. Activations repack their output into the
// layout their consumer asks for; every other layer's output layout follows
// from its input.
struct InferencePlan {
  Layout input;
  std::vector<Layout> outputs;             // per layer
  std::vector<std::optional<SlotMap>> maps;  // per activation layer
  std::size_t zeros_per_run = 0;           // client online encryptions
  std::vector<bool> keep;                  // outputs needed by residual layers
};

InferencePlan plan_inference(const Context& ctx, const Model& model);

// Layout of fully connected outputs: ciphertext o, slot 0.
Layout fc_output_layout(const Context& ctx, u32 features);

// Frame layer ids: 0 for setup and input, i + 1 for layer i, and
// layers.size() + 1 for the returned logits.
inline u32 frame_layer(std::size_t layer) { return static_cast<u32>(layer + 1); }

Handshake make_handshake(const Context& ctx, const Model& model);

class ServerRunner {
 public:
  ServerRunner(ContextPtr ctx, const Model& model, EngineOptions options, Prng& prng);

  // Samples masks for the next run; no communication.
  void offline();
  void run(Endpoint& ep);

  const InferencePlan& plan() const { return plan_; }

  // Test hook: sees every layer's encrypted output.
  using Observer = std::function<void(std::size_t layer, const PackedTensor&)>;
  void set_observer(Observer fn) { observer_ = std::move(fn); }

 private:
  ContextPtr ctx_;
  const Model& model_;
  EngineOptions options_;
  Prng& prng_;
  InferencePlan plan_;
  Observer observer_;
  std::vector<std::optional<ActivationSession>> act_;
  std::vector<std::optional<RescaleSession>> rescale_;
  bool ready_ = false;
};

struct ClientResult {
  std::vector<i64> logits;
  int scale = 0;
};

// The client needs the architecture only; weights in `model` are unused.
class ClientRunner {
 public:
  ClientRunner(ContextPtr ctx, const Model& model, const SecretKey& sk,
               EngineOptions options, Prng& prng);

  // Precomputes the zero ciphertexts for the next run.
  void offline();
  ClientResult run(Endpoint& ep, const Tensor& input);

  const InferencePlan& plan() const { return plan_; }

 private:
  ContextPtr ctx_;
  const Model& model_;
  const SecretKey& sk_;
  EngineOptions options_;
  Prng& prng_;
  InferencePlan plan_;
  ZeroPool pool_;
};

}  // namespace flash
