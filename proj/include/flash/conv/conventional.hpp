#pragma once

#include "flash/bfv/evaluator.hpp"
#include "flash/conv/layout.hpp"

namespace flash {

// Baseline batch-encoded convolution. Per output group:
//   RowSum(sum_b Rot(b * tile, sum_k Rot(delta_k, sum_g PMult(ct_g, pt)))).
// Kernel weights live in plaintexts placed so each product lands on the
// right output slot; identical plaintexts are stored once.
struct ConventionalPlan {
  struct Product {
    u32 ct;
    u32 pt;
  };
  struct Output {
    std::vector<std::vector<Product>> taps;  // per kernel position
  };
  Layout in, out;
  u32 kernel = 0;
  std::vector<i64> tap_steps;   // per kernel position
  std::vector<i64> tile_steps;  // channel-tile alignment within a lane
  bool row_sum = false;
  std::vector<i64> bias;
  std::vector<PlaintextEval> plaintexts;
  std::vector<Output> outputs;  // one per output ciphertext
  u64 plaintext_uses = 0;       // before deduplication

  std::vector<i64> rotation_steps() const;
  // Server-side weight storage: one n-coefficient polynomial mod q per
  // plaintext the layer needs.
  u64 plaintext_bytes(const Context& ctx) const;
  u64 stored_plaintext_bytes(const Context& ctx) const;
};

Layout conventional_output_layout(const Layout& in, u32 out_channels);

ConventionalPlan plan_conventional(const Context& ctx, const Layout& in,
                                   const ConvLayerSpec& layer);

PackedTensor conv_conventional(const Context& ctx, const PackedTensor& x,
                               const ConventionalPlan& plan,
                               const SwitchingKeySet& keys, int threads = 1);

// Plan statistics without building plaintexts.
struct ConventionalCost {
  u64 plaintexts = 0;
  std::vector<i64> steps;
};
ConventionalCost conventional_cost(const Context& ctx, const Layout& in,
                                   const ConvLayerSpec& layer);

}  // namespace flash
