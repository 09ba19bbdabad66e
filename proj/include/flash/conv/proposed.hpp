#pragma once

#include "flash/conv/layout.hpp"

namespace flash {

struct ConvOptions {
  bool lazy = true;
  int threads = 1;
};

// Layout of conv_proposed output: one ciphertext per (output channel, band),
// values at the positions of the first input tile.
Layout conv_output_layout(const Layout& in, u32 out_channels);

// DRot/CMult convolution of direct-encoded input. Output ciphertexts are in
// the coefficient domain; slots outside the output grid hold partial sums.
PackedTensor conv_proposed(const Context& ctx, const PackedTensor& x,
                           const ConvLayerSpec& layer, ConvOptions options = {});

}  // namespace flash
