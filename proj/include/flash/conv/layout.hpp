#pragma once

#include <vector>

#include "flash/bfv/ciphertext.hpp"

namespace flash {

// Channel-major integer feature map.
struct Tensor {
  u32 channels = 0, height = 0, width = 0;
  std::vector<i64> data;

  Tensor() = default;
  Tensor(u32 c, u32 h, u32 w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0) {}

  std::size_t size() const { return data.size(); }
  i64& at(u32 c, u32 y, u32 x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  i64 at(u32 c, u32 y, u32 x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Tensor&) const = default;
};

struct ConvLayerSpec {
  u32 height = 0, width = 0;
  u32 kernel = 3;
  u32 in_channels = 0, out_channels = 0;
  std::vector<i32> weights;  // [out][in][ky][kx]
  std::vector<i64> bias;     // empty, or one per output channel
  int weight_scale = 0;

  u32 pad() const { return kernel / 2; }
  i32 weight(u32 o, u32 i, u32 ky, u32 kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) *
                       kernel + kx];
  }
  void validate() const;
};

// One channel tile (or one horizontal band of a channel too large for a
// lane) inside a ciphertext.
struct LayoutPiece {
  u32 ct = 0;
  u32 lane = 0;
  u32 channel = 0;
  u32 row_begin = 0;  // first interior row held
  u32 rows = 0;       // interior rows held
  u32 base = 0;       // first slot of the tile inside its lane
};

struct SlotRef {
  u32 ct;
  u32 slot;
};

// Where every value of a (C, H, W) map lives in a list of ciphertexts.
// Values sit on a padded grid: (y, x) of a piece maps to
//   lane * lane_size + base + (pad + (y - row_begin) * stride) * row_pitch
//   + pad + x * stride.
// Band pieces repeat `pad` halo rows of their neighbours above and below.
struct Layout {
  u32 channels = 0, height = 0, width = 0;
  u32 pad = 0;
  u32 stride = 1;
  u32 row_pitch = 0;
  u32 tile_rows = 0;  // padded rows occupied by a piece
  u32 lane_size = 0;
  u32 lanes = 1;
  u32 per_lane = 1;   // channel tiles per lane
  u32 band_rows = 0;  // interior rows per band (height when not banded)
  u32 ct_count = 0;
  std::vector<LayoutPiece> pieces;  // ordered by (channel, band)

  u32 bands() const { return (height + band_rows - 1) / band_rows; }
  bool banded() const { return bands() > 1; }
  u32 tile_size() const { return row_pitch * tile_rows; }
  const LayoutPiece& piece(u32 channel, u32 y) const {
    return pieces[static_cast<std::size_t>(channel) * bands() + y / band_rows];
  }
  u32 slot_in_piece(const LayoutPiece& pc, u32 y, u32 x) const {
    return pc.lane * lane_size + pc.base +
           (pad + (y - pc.row_begin) * stride) * row_pitch + pad + x * stride;
  }
  SlotRef locate(u32 channel, u32 y, u32 x) const {
    const LayoutPiece& pc = piece(channel, y);
    return {pc.ct, slot_in_piece(pc, y, x)};
  }
  bool operator==(const Layout&) const;
};

bool operator==(const LayoutPiece& a, const LayoutPiece& b);

// Dense stride-1 layout with a zero border of `pad`. Channels share a lane
// in tiles of (H + 2 pad) x (W + 2 pad); a tile larger than a lane is cut
// into bands whose interior height is a multiple of row_align.
Layout make_layout(u32 channels, u32 height, u32 width, u32 pad, u32 lane_size,
                   u32 lanes, u32 row_align = 1);
Layout direct_layout(const Context& ctx, u32 channels, u32 height, u32 width,
                     u32 pad, u32 row_align = 1);
Layout batch_layout(const Context& ctx, u32 channels, u32 height, u32 width,
                    u32 pad, u32 row_align = 1);

// Per-ciphertext list of (slot, flat CHW source index), halo copies
// included. Slots not listed are zero.
struct SlotSource {
  u32 slot;
  u32 index;
};
std::vector<std::vector<SlotSource>> slot_sources(const Layout& layout);

std::vector<MessageVec> pack_plain(const Context& ctx, const Layout& layout,
                                   const Tensor& x);
// Reads the canonical slot of every value, centered.
Tensor unpack_plain(const Context& ctx, const Layout& layout,
                    const std::vector<MessageVec>& slots);

struct PackedTensor {
  std::vector<Ciphertext> cts;
  Layout layout;
};

PackedTensor pack_input(const Context& ctx, const Layout& layout,
                        const Tensor& x, const SecretKey& sk, Prng& prng);
Tensor unpack(const Context& ctx, const PackedTensor& x, const SecretKey& sk);

// Integer reference convolution, stride 1, same padding.
Tensor conv_oracle(const Tensor& x, const ConvLayerSpec& layer);

}  // namespace flash
