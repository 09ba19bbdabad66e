#pragma once

#include "flash/conv/layout.hpp"

namespace flash {

// Sum of each k x k window (division deferred to the next rescale), placed
// at the window's top-left slot. DRot and HAdd only.
PackedTensor avg_pool(const Context& ctx, const PackedTensor& x, u32 k);
Tensor avg_pool_oracle(const Tensor& x, u32 k);

struct FcSpec {
  u32 in_features = 0, out_features = 0;
  std::vector<i32> weights;  // [out][in], input flattened as CHW
  std::vector<i64> bias;
  int weight_scale = 0;

  void validate() const;
};

// One ciphertext per output; the result sits in slot 0 and the other slots
// hold unrelated partial sums.
std::vector<Ciphertext> fully_connected(const Context& ctx, const PackedTensor& x,
                                        const FcSpec& fc, int threads = 1);
std::vector<i64> fc_oracle(const Tensor& x, const FcSpec& fc);

}  // namespace flash
