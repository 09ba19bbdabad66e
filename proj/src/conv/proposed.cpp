#include "flash/conv/proposed.hpp"

#include <bit>
#include <cstdlib>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "flash/bfv/evaluator.hpp"
#include "flash/parallel.hpp"
#include "flash/ring/wide.hpp"

namespace flash {

Layout conv_output_layout(const Layout& in, u32 out_channels) {
  Layout out = in;
  out.channels = out_channels;
  out.per_lane = 1;
  out.pieces.clear();
  const u32 bands = in.bands();
  const u32 per_channel = (bands + in.lanes - 1) / in.lanes;
  for (u32 o = 0; o < out_channels; ++o) {
    for (u32 b = 0; b < bands; ++b) {
      const LayoutPiece& src = in.pieces[b];
      out.pieces.push_back({o * per_channel + b / in.lanes, b % in.lanes, o,
                            src.row_begin, src.rows, 0});
    }
  }
  out.ct_count = out_channels * per_channel;
  return out;
}

namespace {

void check_input(const Context& ctx, const PackedTensor& x,
                 const ConvLayerSpec& layer) {
  layer.validate();
  const Layout& l = x.layout;
  if (l.lanes != 1 || l.lane_size != ctx.n()) {
    throw UsageError("proposed convolution needs a direct layout");
  }
  if (l.channels != layer.in_channels || l.height != layer.height ||
      l.width != layer.width || l.stride == 0) {
    throw UsageError("layout does not match layer");
  }
  // Strided layouts come from pooling; neighbours sit `stride` slots apart.
  if (l.pad < layer.pad() * l.stride) {
    throw UsageError("layout padding smaller than kernel");
  }
  if (x.cts.size() != l.ct_count) throw UsageError("ciphertext count mismatch");
  for (const Ciphertext& ct : x.cts) {
    if (ct.encoding != Encoding::kDirect) {
      throw EncodingError("proposed convolution needs direct encoding");
    }
  }
}

// The lazy kernel splits each coefficient into two 30-bit limbs and
// accumulates them in doubles: with |w| < 2^8 every partial sum stays an
// integer below 2^53, so the sums are exact.
constexpr int kLimbBits = 30;
constexpr u64 kLimbMask = (u64{1} << kLimbBits) - 1;
constexpr u64 kExactBudget = u64{1} << (53 - kLimbBits);

// Limbs of c0 and c1 as doubles, each followed by its negation so that a
// read at i + shift for any shift in [0, n) picks up the negacyclic wrap.
struct SplitCt {
  std::vector<double> limb[4];
};

SplitCt split(const Ciphertext& ct) {
  const std::size_t n = ct.c0.size();
  SplitCt e;
  const ModPoly* polys[2] = {&ct.c0, &ct.c1};
  for (int p = 0; p < 2; ++p) {
    std::vector<double>& lo = e.limb[2 * p];
    std::vector<double>& hi = e.limb[2 * p + 1];
    lo.resize(2 * n);
    hi.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      u64 c = (*polys[p])[i];
      lo[i] = static_cast<double>(c & kLimbMask);
      hi[i] = static_cast<double>(c >> kLimbBits);
      lo[i + n] = -lo[i];
      hi[i + n] = -hi[i];
    }
  }
  return e;
}

constexpr std::size_t kGroup = 8;  // output channels sharing each load
constexpr std::size_t kTile = 16;  // coefficients held in registers

// Output i reads source i + shift, shift in [0, n).
struct BlockTerm {
  const SplitCt* src;
  std::size_t shift;
  double w[kGroup];
};

// acc[a][g][c] = sum over terms of w[g] * limb_a[begin + c + shift].
inline void tile_mac(const std::vector<BlockTerm>& terms, std::size_t begin,
                     double (*acc)[kGroup][kTile]) {
#if defined(__AVX512F__)
  for (int a = 0; a < 4; ++a) {
    __m512d r[kGroup][2];
    for (std::size_t g = 0; g < kGroup; ++g) r[g][0] = r[g][1] = _mm512_setzero_pd();
    for (const BlockTerm& t : terms) {
      const double* s = t.src->limb[a].data() + begin + t.shift;
      const __m512d v0 = _mm512_loadu_pd(s);
      const __m512d v1 = _mm512_loadu_pd(s + 8);
      for (std::size_t g = 0; g < kGroup; ++g) {
        const __m512d w = _mm512_set1_pd(t.w[g]);
        r[g][0] = _mm512_fmadd_pd(v0, w, r[g][0]);
        r[g][1] = _mm512_fmadd_pd(v1, w, r[g][1]);
      }
    }
    for (std::size_t g = 0; g < kGroup; ++g) {
      _mm512_storeu_pd(acc[a][g], r[g][0]);
      _mm512_storeu_pd(acc[a][g] + 8, r[g][1]);
    }
  }
#else
  for (int a = 0; a < 4; ++a) {
    double r[kGroup][kTile] = {};
    for (const BlockTerm& t : terms) {
      const double* s = t.src->limb[a].data() + begin + t.shift;
      for (std::size_t g = 0; g < kGroup; ++g) {
        for (std::size_t c = 0; c < kTile; ++c) r[g][c] += s[c] * t.w[g];
      }
    }
    for (std::size_t g = 0; g < kGroup; ++g) {
      for (std::size_t c = 0; c < kTile; ++c) acc[a][g][c] = r[g][c];
    }
  }
#endif
}

void check_budget(const std::vector<BlockTerm>& terms) {
  for (std::size_t g = 0; g < kGroup; ++g) {
    u64 budget = 0;
    for (const BlockTerm& t : terms) budget += static_cast<u64>(std::abs(t.w[g]));
    if (budget > kExactBudget) throw OverflowError("lazy accumulation budget exceeded");
  }
}

// Coefficients [begin, end) of out[g * stride] = sum over terms of
// w[g] * x_ct * x^(-shift), one reduction each.
void lazy_range(const Context& ctx, const std::vector<BlockTerm>& terms, std::size_t group,
                Ciphertext* out, std::size_t stride, std::size_t begin, std::size_t end) {
  const Modulus& mod = ctx.q_ring().mod();
  const u128 q = mod.value();
  const i128 offset = static_cast<i128>(((static_cast<u128>(1) << 84) / q + 1) * q);
  for (std::size_t at = begin; at < end; at += kTile) {
    alignas(64) double acc[4][kGroup][kTile];
    tile_mac(terms, at, acc);
    for (std::size_t g = 0; g < group; ++g) {
      u64* out0 = out[g * stride].c0.coeffs.data() + at;
      u64* out1 = out[g * stride].c1.coeffs.data() + at;
      for (std::size_t c = 0; c < kTile; ++c) {
        i128 v0 = (static_cast<i128>(static_cast<i64>(acc[1][g][c])) << kLimbBits) +
                  static_cast<i64>(acc[0][g][c]);
        i128 v1 = (static_cast<i128>(static_cast<i64>(acc[3][g][c])) << kLimbBits) +
                  static_cast<i64>(acc[2][g][c]);
        out0[c] = mod.reduce128(static_cast<u128>(v0 + offset));
        out1[c] = mod.reduce128(static_cast<u128>(v1 + offset));
      }
    }
  }
}

Ciphertext zero_like(const Context& ctx) {
  Ciphertext z;
  z.c0 = ModPoly(ctx.n(), ctx.q(), Domain::kCoefficient);
  z.c1 = ModPoly(ctx.n(), ctx.q(), Domain::kCoefficient);
  z.encoding = Encoding::kDirect;
  return z;
}

// Algorithm 1 with a reduction after every operation.
Ciphertext eager_output(const Context& ctx, const PackedTensor& x,
                        const ConvLayerSpec& layer, u32 o, u32 band) {
  const Layout& l = x.layout;
  const i64 pad = layer.pad();
  Ciphertext partial = zero_like(ctx);
  for (const LayoutPiece& pc : l.pieces) {
    if (pc.row_begin / l.band_rows != band) continue;
    const Ciphertext& src = x.cts[pc.ct];
    Ciphertext t = zero_like(ctx);
    for (u32 ky = 0; ky < layer.kernel; ++ky) {
      for (u32 kx = 0; kx < layer.kernel; ++kx) {
        i32 w = layer.weight(o, pc.channel, ky, kx);
        if (w == 0) continue;
        i64 delta = ((static_cast<i64>(ky) - pad) * l.row_pitch +
                     (static_cast<i64>(kx) - pad)) * l.stride;
        hadd_inplace(ctx, t, cmult(ctx, drot(ctx, src, delta), w));
      }
    }
    hadd_inplace(ctx, partial, drot(ctx, t, pc.base));
  }
  return partial;
}

}  // namespace

PackedTensor conv_proposed(const Context& ctx, const PackedTensor& x,
                           const ConvLayerSpec& layer, ConvOptions options) {
  check_input(ctx, x, layer);
  if (std::bit_width(ctx.q()) > 2 * kLimbBits) {
    throw ParameterError("modulus too wide for the convolution kernel");
  }
  PackedTensor out{{}, conv_output_layout(x.layout, layer.out_channels)};
  const u32 bands = x.layout.bands();
  out.cts.resize(static_cast<std::size_t>(layer.out_channels) * bands);

  const PackedTensor* input = &x;
  PackedTensor converted;
  for (const Ciphertext& ct : x.cts) {
    if (ct.domain() != Domain::kCoefficient) {
      converted.layout = x.layout;
      for (const Ciphertext& c : x.cts) converted.cts.push_back(to_coeff(ctx, c));
      input = &converted;
      break;
    }
  }

  if (options.lazy) {
    const std::size_t n = ctx.n();
    std::vector<SplitCt> limbs(input->cts.size());
    parallel_for(limbs.size(), options.threads,
                 [&](std::size_t i) { limbs[i] = split(input->cts[i]); });
    const std::size_t groups = (layer.out_channels + kGroup - 1) / kGroup;
    // Same (ciphertext, shift) sequence for every output of a group.
    std::vector<std::vector<BlockTerm>> terms(groups * bands);
    const i64 pad = layer.pad();
    for (std::size_t job = 0; job < terms.size(); ++job) {
      const u32 band = static_cast<u32>(job % bands);
      const u32 first = static_cast<u32>(job / bands * kGroup);
      const std::size_t count = std::min<std::size_t>(kGroup, layer.out_channels - first);
      for (const LayoutPiece& pc : x.layout.pieces) {
        if (pc.row_begin / x.layout.band_rows != band) continue;
        for (u32 ky = 0; ky < layer.kernel; ++ky) {
          for (u32 kx = 0; kx < layer.kernel; ++kx) {
            BlockTerm t{&limbs[pc.ct], 0, {}};
            bool any = false;
            for (std::size_t g = 0; g < count; ++g) {
              t.w[g] = layer.weight(first + static_cast<u32>(g), pc.channel, ky, kx);
              any = any || t.w[g] != 0;
            }
            if (!any) continue;
            i64 shift = static_cast<i64>(pc.base) +
                        ((static_cast<i64>(ky) - pad) * x.layout.row_pitch +
                         (static_cast<i64>(kx) - pad)) * x.layout.stride;
            shift %= static_cast<i64>(2 * n);
            if (shift < 0) shift += static_cast<i64>(2 * n);
            if (shift >= static_cast<i64>(n)) {
              shift -= static_cast<i64>(n);
              for (double& w : t.w) w = -w;
            }
            t.shift = static_cast<std::size_t>(shift);
            terms[job].push_back(t);
          }
        }
      }
      check_budget(terms[job]);
    }
    for (Ciphertext& ct : out.cts) ct = zero_like(ctx);
    // Each job covers one coefficient span of one band for all output
    // groups, so the span's input window stays in cache.
    constexpr std::size_t kSpan = 256;
    const std::size_t spans = (n + kSpan - 1) / kSpan;
    parallel_for(bands * spans, options.threads, [&](std::size_t job) {
      const u32 band = static_cast<u32>(job / spans);
      const std::size_t begin = job % spans * kSpan;
      const std::size_t end = std::min(n, begin + kSpan);
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::size_t first = grp * kGroup;
        const std::size_t count = std::min<std::size_t>(kGroup, layer.out_channels - first);
        lazy_range(ctx, terms[grp * bands + band], count, &out.cts[first * bands + band], bands,
                   begin, end);
      }
    });
  } else {
    parallel_for(static_cast<std::size_t>(layer.out_channels) * bands,
                 options.threads, [&](std::size_t k) {
                   out.cts[k] = eager_output(ctx, *input, layer,
                                             static_cast<u32>(k / bands),
                                             static_cast<u32>(k % bands));
                 });
  }

  if (!layer.bias.empty()) {
    const Modulus& pm = ctx.p_ring().mod();
    for (u32 o = 0; o < layer.out_channels; ++o) {
      for (u32 b = 0; b < bands; ++b) {
        const LayoutPiece& pc = out.layout.pieces[o * bands + b];
        MessageVec m(ctx.n(), 0);
        u64 v = pm.from_signed(layer.bias[o]);
        for (u32 y = pc.row_begin; y < pc.row_begin + pc.rows; ++y) {
          for (u32 xx = 0; xx < layer.width; ++xx) {
            m[out.layout.slot_in_piece(pc, y, xx)] = v;
          }
        }
        Ciphertext& ct = out.cts[pc.ct];
        ct = plain_add(ctx, ct, encode_direct(ctx, m));
      }
    }
  }
  return out;
}

}  // namespace flash
