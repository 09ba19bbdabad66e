#include "flash/conv/linear.hpp"

#include <string>

#include "flash/bfv/evaluator.hpp"
#include "flash/parallel.hpp"
#include "flash/ring/wide.hpp"

namespace flash {

PackedTensor avg_pool(const Context& ctx, const PackedTensor& x, u32 k) {
  const Layout& in = x.layout;
  if (k == 0 || in.height % k != 0 || in.width % k != 0) {
    throw UsageError("pool size must divide the feature map");
  }
  if (in.lanes != 1) throw EncodingError("pooling needs a direct layout");
  for (const LayoutPiece& pc : in.pieces) {
    if (pc.row_begin % k != 0 || pc.rows % k != 0) {
      throw UsageError("band rows not aligned to the pool size");
    }
  }
  PackedTensor out{{}, in};
  Layout& l = out.layout;
  l.height /= k;
  l.width /= k;
  l.band_rows /= k;
  l.stride *= k;
  for (LayoutPiece& pc : l.pieces) {
    pc.row_begin /= k;
    pc.rows /= k;
  }
  for (const Ciphertext& ct : x.cts) {
    Ciphertext acc = ct;
    for (u32 a = 0; a < k; ++a) {
      for (u32 b = 0; b < k; ++b) {
        if (a == 0 && b == 0) continue;
        i64 shift = static_cast<i64>(a * in.stride) * in.row_pitch + b * in.stride;
        hadd_inplace(ctx, acc, drot(ctx, ct, shift));
      }
    }
    out.cts.push_back(std::move(acc));
  }
  return out;
}

Tensor avg_pool_oracle(const Tensor& x, u32 k) {
  if (k == 0 || x.height % k != 0 || x.width % k != 0) {
    throw UsageError("pool size must divide the feature map");
  }
  Tensor out(x.channels, x.height / k, x.width / k);
  for (u32 c = 0; c < x.channels; ++c) {
    for (u32 y = 0; y < out.height; ++y) {
      for (u32 xx = 0; xx < out.width; ++xx) {
        i64 s = 0;
        for (u32 a = 0; a < k; ++a) {
          for (u32 b = 0; b < k; ++b) s += x.at(c, y * k + a, xx * k + b);
        }
        out.at(c, y, xx) = s;
      }
    }
  }
  return out;
}

void FcSpec::validate() const {
  if (in_features == 0 || out_features == 0) {
    throw ParameterError("empty fully connected layer");
  }
  if (weights.size() != static_cast<std::size_t>(in_features) * out_features) {
    throw ParameterError("expected " +
                         std::to_string(static_cast<std::size_t>(in_features) *
                                        out_features) +
                         " weights, got " + std::to_string(weights.size()));
  }
  for (i32 w : weights) {
    if (w <= -256 || w >= 256) throw ParameterError("weight exceeds 8 bits");
  }
  if (!bias.empty() && bias.size() != out_features) {
    throw ParameterError("bias length does not match outputs");
  }
}

std::vector<Ciphertext> fully_connected(const Context& ctx, const PackedTensor& x,
                                        const FcSpec& fc, int threads) {
  fc.validate();
  const Layout& l = x.layout;
  if (static_cast<u64>(l.channels) * l.height * l.width != fc.in_features) {
    throw UsageError("input size does not match the layer");
  }
  if (l.lanes != 1) throw EncodingError("fully connected layer needs a direct layout");
  std::vector<Ciphertext> in(x.cts.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    in[i] = x.cts[i].domain() == Domain::kCoefficient ? x.cts[i] : to_coeff(ctx, x.cts[i]);
  }
  std::vector<SlotRef> refs;
  refs.reserve(fc.in_features);
  for (u32 c = 0; c < l.channels; ++c) {
    for (u32 y = 0; y < l.height; ++y) {
      for (u32 xx = 0; xx < l.width; ++xx) refs.push_back(l.locate(c, y, xx));
    }
  }
  std::vector<Ciphertext> out(fc.out_features);
  const Modulus& pm = ctx.p_ring().mod();
  parallel_for(fc.out_features, threads, [&](std::size_t o) {
    WidePoly acc0(ctx.n(), ctx.q()), acc1(ctx.n(), ctx.q());
    for (u32 i = 0; i < fc.in_features; ++i) {
      i32 w = fc.weights[o * fc.in_features + i];
      if (w == 0) continue;
      const Ciphertext& src = in[refs[i].ct];
      wide_accumulate_shifted(acc0, src.c0, refs[i].slot, w);
      wide_accumulate_shifted(acc1, src.c1, refs[i].slot, w);
    }
    Ciphertext ct;
    ct.c0 = finalize(acc0);
    ct.c1 = finalize(acc1);
    ct.encoding = Encoding::kDirect;
    if (!fc.bias.empty()) {
      MessageVec m(ctx.n(), 0);
      m[0] = pm.from_signed(fc.bias[o]);
      ct = plain_add(ctx, ct, encode_direct(ctx, m));
    }
    out[o] = std::move(ct);
  });
  return out;
}

std::vector<i64> fc_oracle(const Tensor& x, const FcSpec& fc) {
  fc.validate();
  if (x.size() != fc.in_features) throw UsageError("input size does not match the layer");
  std::vector<i64> out(fc.out_features);
  for (u32 o = 0; o < fc.out_features; ++o) {
    i64 s = fc.bias.empty() ? 0 : fc.bias[o];
    for (u32 i = 0; i < fc.in_features; ++i) {
      s += static_cast<i64>(fc.weights[o * fc.in_features + i]) * x.data[i];
    }
    out[o] = s;
  }
  return out;
}

}  // namespace flash
