#include "flash/conv/layout.hpp"

#include <string>

namespace flash {

void ConvLayerSpec::validate() const {
  if (kernel == 0 || kernel % 2 == 0) {
    throw ParameterError("kernel width must be odd");
  }
  if (height == 0 || width == 0 || in_channels == 0 || out_channels == 0) {
    throw ParameterError("empty convolution layer");
  }
  std::size_t expect = static_cast<std::size_t>(out_channels) * in_channels *
                       kernel * kernel;
  if (weights.size() != expect) {
    throw ParameterError("expected " + std::to_string(expect) + " weights, got " +
                         std::to_string(weights.size()));
  }
  for (i32 w : weights) {
    if (w <= -256 || w >= 256) throw ParameterError("weight exceeds 8 bits");
  }
  if (!bias.empty() && bias.size() != out_channels) {
    throw ParameterError("bias length does not match output channels");
  }
}

bool operator==(const LayoutPiece& a, const LayoutPiece& b) {
  return a.ct == b.ct && a.lane == b.lane && a.channel == b.channel &&
         a.row_begin == b.row_begin && a.rows == b.rows && a.base == b.base;
}

bool Layout::operator==(const Layout& o) const {
  return channels == o.channels && height == o.height && width == o.width &&
         pad == o.pad && stride == o.stride && row_pitch == o.row_pitch &&
         tile_rows == o.tile_rows && lane_size == o.lane_size &&
         lanes == o.lanes && per_lane == o.per_lane &&
         band_rows == o.band_rows && ct_count == o.ct_count &&
         pieces == o.pieces;
}

Layout make_layout(u32 channels, u32 height, u32 width, u32 pad, u32 lane_size,
                   u32 lanes, u32 row_align) {
  if (channels == 0 || height == 0 || width == 0) {
    throw ParameterError("empty feature map");
  }
  if (row_align == 0) row_align = 1;
  Layout l;
  l.channels = channels;
  l.height = height;
  l.width = width;
  l.pad = pad;
  l.row_pitch = width + 2 * pad;
  l.lane_size = lane_size;
  l.lanes = lanes;
  if (l.row_pitch > lane_size) {
    throw ParameterError("padded row does not fit a lane");
  }
  const u32 padded_rows = height + 2 * pad;
  const u64 tile = static_cast<u64>(padded_rows) * l.row_pitch;
  if (tile <= lane_size) {
    l.tile_rows = padded_rows;
    l.band_rows = height;
    l.per_lane = static_cast<u32>(lane_size / tile);
    const u32 per_ct = l.per_lane * lanes;
    l.ct_count = (channels + per_ct - 1) / per_ct;
    for (u32 c = 0; c < channels; ++c) {
      u32 r = c % per_ct;
      l.pieces.push_back({c / per_ct, r / l.per_lane, c, 0, height,
                          static_cast<u32>((r % l.per_lane) * tile)});
    }
    return l;
  }
  const u32 fit = lane_size / l.row_pitch;
  if (fit <= 2 * pad) throw ParameterError("padded band does not fit a lane");
  u32 interior = fit - 2 * pad;
  interior -= interior % row_align;
  if (interior == 0) throw ParameterError("band too small for row alignment");
  l.band_rows = interior;
  l.tile_rows = interior + 2 * pad;
  l.per_lane = 1;
  const u32 bands = (height + interior - 1) / interior;
  const u32 cts_per_channel = (bands + lanes - 1) / lanes;
  l.ct_count = channels * cts_per_channel;
  for (u32 c = 0; c < channels; ++c) {
    for (u32 b = 0; b < bands; ++b) {
      u32 begin = b * interior;
      u32 rows = std::min(interior, height - begin);
      l.pieces.push_back({c * cts_per_channel + b / lanes, b % lanes, c, begin,
                          rows, 0});
    }
  }
  return l;
}

Layout direct_layout(const Context& ctx, u32 channels, u32 height, u32 width,
                     u32 pad, u32 row_align) {
  return make_layout(channels, height, width, pad, static_cast<u32>(ctx.n()), 1,
                     row_align);
}

Layout batch_layout(const Context& ctx, u32 channels, u32 height, u32 width,
                    u32 pad, u32 row_align) {
  return make_layout(channels, height, width, pad,
                     static_cast<u32>(ctx.row_size()), 2, row_align);
}

std::vector<std::vector<SlotSource>> slot_sources(const Layout& l) {
  std::vector<std::vector<SlotSource>> out(l.ct_count);
  for (const LayoutPiece& pc : l.pieces) {
    // Interior rows plus halo rows that fall inside the image.
    i64 first = pc.row_begin;
    i64 last = static_cast<i64>(pc.row_begin) + pc.rows;
    if (l.banded() && l.stride == 1) {
      first -= l.pad;
      last += l.pad;
    }
    for (i64 y = std::max<i64>(first, 0); y < std::min<i64>(last, l.height); ++y) {
      u32 row_slot = static_cast<u32>(
          pc.lane * l.lane_size + pc.base +
          (l.pad + (y - static_cast<i64>(pc.row_begin)) * static_cast<i64>(l.stride)) *
              l.row_pitch +
          l.pad);
      for (u32 x = 0; x < l.width; ++x) {
        u32 index = (pc.channel * l.height + static_cast<u32>(y)) * l.width + x;
        out[pc.ct].push_back({row_slot + x * l.stride, index});
      }
    }
  }
  return out;
}

std::vector<MessageVec> pack_plain(const Context& ctx, const Layout& l,
                                   const Tensor& x) {
  if (x.channels != l.channels || x.height != l.height || x.width != l.width) {
    throw UsageError("tensor does not match layout");
  }
  if (static_cast<u64>(l.lane_size) * l.lanes != ctx.n()) {
    throw UsageError("layout built for a different ring");
  }
  std::vector<MessageVec> out(l.ct_count, MessageVec(ctx.n(), 0));
  auto sources = slot_sources(l);
  const Modulus& pm = ctx.p_ring().mod();
  for (u32 c = 0; c < l.ct_count; ++c) {
    for (const SlotSource& s : sources[c]) {
      out[c][s.slot] = pm.from_signed(x.data[s.index]);
    }
  }
  return out;
}

Tensor unpack_plain(const Context& ctx, const Layout& l,
                    const std::vector<MessageVec>& slots) {
  if (slots.size() != l.ct_count) throw UsageError("ciphertext count mismatch");
  Tensor t(l.channels, l.height, l.width);
  const Modulus& pm = ctx.p_ring().mod();
  for (u32 c = 0; c < l.channels; ++c) {
    for (u32 y = 0; y < l.height; ++y) {
      for (u32 x = 0; x < l.width; ++x) {
        SlotRef r = l.locate(c, y, x);
        t.at(c, y, x) = pm.to_signed(slots[r.ct][r.slot]);
      }
    }
  }
  return t;
}

PackedTensor pack_input(const Context& ctx, const Layout& l, const Tensor& x,
                        const SecretKey& sk, Prng& prng) {
  PackedTensor out{{}, l};
  const bool batch = l.lanes > 1;
  for (const MessageVec& m : pack_plain(ctx, l, x)) {
    out.cts.push_back(encrypt_private(
        ctx, batch ? encode_batch(ctx, m) : encode_direct(ctx, m), sk, prng));
  }
  return out;
}

Tensor unpack(const Context& ctx, const PackedTensor& x, const SecretKey& sk) {
  std::vector<MessageVec> slots;
  for (const Ciphertext& ct : x.cts) slots.push_back(decode(ctx, decrypt(ctx, ct, sk)));
  return unpack_plain(ctx, x.layout, slots);
}

Tensor conv_oracle(const Tensor& x, const ConvLayerSpec& layer) {
  layer.validate();
  if (x.channels != layer.in_channels || x.height != layer.height ||
      x.width != layer.width) {
    throw UsageError("input does not match layer");
  }
  const i64 pad = layer.pad();
  Tensor out(layer.out_channels, layer.height, layer.width);
  for (u32 o = 0; o < layer.out_channels; ++o) {
    for (u32 y = 0; y < layer.height; ++y) {
      for (u32 xx = 0; xx < layer.width; ++xx) {
        i64 acc = layer.bias.empty() ? 0 : layer.bias[o];
        for (u32 i = 0; i < layer.in_channels; ++i) {
          for (u32 ky = 0; ky < layer.kernel; ++ky) {
            i64 sy = static_cast<i64>(y) + ky - pad;
            if (sy < 0 || sy >= layer.height) continue;
            for (u32 kx = 0; kx < layer.kernel; ++kx) {
              i64 sx = static_cast<i64>(xx) + kx - pad;
              if (sx < 0 || sx >= layer.width) continue;
              acc += layer.weight(o, i, ky, kx) *
                     x.at(i, static_cast<u32>(sy), static_cast<u32>(sx));
            }
          }
        }
        out.at(o, y, xx) = acc;
      }
    }
  }
  return out;
}

}  // namespace flash
