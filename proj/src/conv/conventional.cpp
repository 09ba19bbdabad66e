#include "flash/conv/conventional.hpp"

#include <unordered_map>

#include "flash/conv/proposed.hpp"
#include "flash/parallel.hpp"

namespace flash {

namespace {

struct Group {
  u32 out_ct;
  u32 out_channel;
  std::vector<u32> cts;
};

void check_layout(const Context& ctx, const Layout& in, const ConvLayerSpec& layer) {
  layer.validate();
  if (in.lanes != 2 || in.lane_size != ctx.row_size()) {
    throw UsageError("conventional convolution needs a batch layout");
  }
  if (in.channels != layer.in_channels || in.height != layer.height ||
      in.width != layer.width || in.stride != 1) {
    throw UsageError("layout does not match layer");
  }
  if (in.pad < layer.pad()) throw UsageError("layout padding smaller than kernel");
}

std::vector<Group> make_groups(const Layout& in, u32 out_channels) {
  std::vector<Group> groups;
  if (!in.banded()) {
    for (u32 o = 0; o < out_channels; ++o) {
      Group g{o, o, {}};
      for (u32 c = 0; c < in.ct_count; ++c) g.cts.push_back(c);
      groups.push_back(std::move(g));
    }
    return groups;
  }
  const u32 per_channel = in.ct_count / in.channels;
  for (u32 o = 0; o < out_channels; ++o) {
    for (u32 m = 0; m < per_channel; ++m) {
      Group g{o * per_channel + m, o, {}};
      for (u32 j = 0; j < in.channels; ++j) g.cts.push_back(j * per_channel + m);
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

i64 tap_delta(const Layout& in, const ConvLayerSpec& layer, u32 k) {
  const i64 pad = layer.pad();
  return (static_cast<i64>(k / layer.kernel) - pad) * in.row_pitch +
         (static_cast<i64>(k % layer.kernel) - pad);
}

// Slots of the plaintext multiplying ciphertext `ct` for tap k of output o.
// Returns false when every weight involved is zero.
bool fill_plaintext(const Context& ctx, const Layout& in,
                    const ConvLayerSpec& layer, u32 o, u32 ct, u32 k,
                    MessageVec& slots) {
  std::fill(slots.begin(), slots.end(), 0);
  const Modulus& pm = ctx.p_ring().mod();
  const i64 delta = tap_delta(in, layer, k);
  bool any = false;
  for (const LayoutPiece& pc : in.pieces) {
    if (pc.ct != ct) continue;
    i32 w = layer.weight(o, pc.channel, k / layer.kernel, k % layer.kernel);
    if (w == 0) continue;
    any = true;
    u64 v = pm.from_signed(w);
    for (u32 y = pc.row_begin; y < pc.row_begin + pc.rows; ++y) {
      for (u32 x = 0; x < in.width; ++x) {
        i64 slot = static_cast<i64>(in.slot_in_piece(pc, y, x)) + delta;
        slots[static_cast<std::size_t>(slot)] = v;
      }
    }
  }
  return any;
}

std::vector<i64> tile_steps_for(const Layout& in) {
  std::vector<i64> steps;
  if (in.banded()) return steps;
  u32 used = std::min(in.per_lane, in.channels);
  for (u32 b = 1; b < used; ++b) steps.push_back(static_cast<i64>(b) * in.tile_size());
  return steps;
}

i64 normalize_step(i64 step, u32 lane) {
  i64 s = step % static_cast<i64>(lane);
  return s < 0 ? s + lane : s;
}

struct VecHash {
  std::size_t operator()(const MessageVec& v) const {
    u64 h = 1469598103934665603ull;
    for (u64 x : v) h = (h ^ x) * 1099511628211ull;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

Layout conventional_output_layout(const Layout& in, u32 out_channels) {
  return conv_output_layout(in, out_channels);
}

std::vector<i64> ConventionalPlan::rotation_steps() const {
  std::vector<i64> steps;
  for (std::size_t k = 0; k < tap_steps.size(); ++k) {
    bool used = false;
    for (const Output& o : outputs) used = used || !o.taps[k].empty();
    if (used && tap_steps[k] != 0) steps.push_back(tap_steps[k]);
  }
  steps.insert(steps.end(), tile_steps.begin(), tile_steps.end());
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

u64 ConventionalPlan::plaintext_bytes(const Context& ctx) const {
  return plaintext_uses * ctx.n() * sizeof(u64);
}

u64 ConventionalPlan::stored_plaintext_bytes(const Context& ctx) const {
  return plaintexts.size() * ctx.n() * sizeof(u64);
}

ConventionalPlan plan_conventional(const Context& ctx, const Layout& in,
                                   const ConvLayerSpec& layer) {
  check_layout(ctx, in, layer);
  ConventionalPlan plan;
  plan.in = in;
  plan.out = conventional_output_layout(in, layer.out_channels);
  plan.kernel = layer.kernel;
  plan.bias = layer.bias;
  const u32 taps = layer.kernel * layer.kernel;
  for (u32 k = 0; k < taps; ++k) {
    plan.tap_steps.push_back(normalize_step(tap_delta(in, layer, k), in.lane_size));
  }
  plan.tile_steps = tile_steps_for(in);
  plan.row_sum = !in.banded() && in.channels > in.per_lane;

  std::unordered_map<MessageVec, u32, VecHash> index;
  MessageVec slots(ctx.n());
  for (const Group& g : make_groups(in, layer.out_channels)) {
    ConventionalPlan::Output out;
    out.taps.resize(taps);
    for (u32 k = 0; k < taps; ++k) {
      for (u32 ct : g.cts) {
        if (!fill_plaintext(ctx, in, layer, g.out_channel, ct, k, slots)) continue;
        ++plan.plaintext_uses;
        auto [it, inserted] =
            index.try_emplace(slots, static_cast<u32>(plan.plaintexts.size()));
        if (inserted) {
          plan.plaintexts.push_back(prepare_pmult(ctx, encode_batch(ctx, slots)));
        }
        out.taps[k].push_back({ct, it->second});
      }
    }
    plan.outputs.push_back(std::move(out));
  }
  return plan;
}

ConventionalCost conventional_cost(const Context& ctx, const Layout& in,
                                   const ConvLayerSpec& layer) {
  check_layout(ctx, in, layer);
  ConventionalCost cost;
  const u32 taps = layer.kernel * layer.kernel;
  for (const Group& g : make_groups(in, layer.out_channels)) {
    for (u32 k = 0; k < taps; ++k) {
      for (u32 ct : g.cts) {
        bool any = false;
        for (const LayoutPiece& pc : in.pieces) {
          if (pc.ct == ct &&
              layer.weight(g.out_channel, pc.channel, k / layer.kernel,
                           k % layer.kernel) != 0) {
            any = true;
            break;
          }
        }
        cost.plaintexts += any;
      }
    }
  }
  for (u32 k = 0; k < taps; ++k) {
    bool used = false;
    for (u32 o = 0; o < layer.out_channels && !used; ++o) {
      for (u32 i = 0; i < layer.in_channels && !used; ++i) {
        used = layer.weight(o, i, k / layer.kernel, k % layer.kernel) != 0;
      }
    }
    i64 s = normalize_step(tap_delta(in, layer, k), in.lane_size);
    if (used && s != 0) cost.steps.push_back(s);
  }
  for (i64 s : tile_steps_for(in)) cost.steps.push_back(s);
  std::sort(cost.steps.begin(), cost.steps.end());
  cost.steps.erase(std::unique(cost.steps.begin(), cost.steps.end()),
                   cost.steps.end());
  return cost;
}

namespace {

// sum_g ct_g * pt_g in the evaluation domain, one reduction per 128 terms.
Ciphertext product_sum(const Context& ctx, const std::vector<Ciphertext>& cts,
                       const ConventionalPlan& plan,
                       const std::vector<ConventionalPlan::Product>& products) {
  const std::size_t n = ctx.n();
  const Modulus& mod = ctx.q_ring().mod();
  std::vector<u128> acc0(n, 0), acc1(n, 0);
  std::size_t pending = 0;
  auto fold = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      acc0[i] = mod.reduce128(acc0[i]);
      acc1[i] = mod.reduce128(acc1[i]);
    }
    pending = 0;
  };
  for (const auto& pr : products) {
    const u64* a0 = cts[pr.ct].c0.coeffs.data();
    const u64* a1 = cts[pr.ct].c1.coeffs.data();
    const u64* b = plan.plaintexts[pr.pt].poly.coeffs.data();
    for (std::size_t i = 0; i < n; ++i) {
      acc0[i] += static_cast<u128>(a0[i]) * b[i];
      acc1[i] += static_cast<u128>(a1[i]) * b[i];
    }
    if (++pending == 128) fold();
  }
  Ciphertext out;
  out.c0 = ModPoly(n, ctx.q(), Domain::kEvaluation);
  out.c1 = ModPoly(n, ctx.q(), Domain::kEvaluation);
  out.encoding = Encoding::kBatch;
  for (std::size_t i = 0; i < n; ++i) {
    out.c0[i] = mod.reduce128(acc0[i]);
    out.c1[i] = mod.reduce128(acc1[i]);
  }
  return out;
}

}  // namespace

PackedTensor conv_conventional(const Context& ctx, const PackedTensor& x,
                               const ConventionalPlan& plan,
                               const SwitchingKeySet& keys, int threads) {
  if (!(x.layout == plan.in)) throw UsageError("input layout does not match plan");
  for (const Ciphertext& ct : x.cts) {
    if (ct.encoding != Encoding::kBatch) {
      throw EncodingError("conventional convolution needs batch encoding");
    }
  }
  for (i64 s : plan.rotation_steps()) {
    if (!keys.has_step(ctx, s)) throw KeyError("missing switching key for step");
  }
  if (plan.row_sum && !keys.has_galois(row_swap_element(ctx.n()))) {
    throw KeyError("missing row swap key");
  }
  std::vector<Ciphertext> in(x.cts.size());
  parallel_for(in.size(), threads, [&](std::size_t i) { in[i] = to_eval(ctx, x.cts[i]); });

  PackedTensor out{std::vector<Ciphertext>(plan.outputs.size()), plan.out};
  parallel_for(plan.outputs.size(), threads, [&](std::size_t g) {
    const auto& spec = plan.outputs[g];
    Ciphertext sum;
    bool have = false;
    for (std::size_t k = 0; k < spec.taps.size(); ++k) {
      if (spec.taps[k].empty()) continue;
      Ciphertext part = product_sum(ctx, in, plan, spec.taps[k]);
      if (plan.tap_steps[k] != 0) part = hrot(ctx, part, plan.tap_steps[k], keys);
      if (have) {
        hadd_inplace(ctx, sum, part);
      } else {
        sum = std::move(part);
        have = true;
      }
    }
    if (!have) {
      sum.c0 = ModPoly(ctx.n(), ctx.q(), Domain::kEvaluation);
      sum.c1 = ModPoly(ctx.n(), ctx.q(), Domain::kEvaluation);
      sum.encoding = Encoding::kBatch;
    }
    Ciphertext aligned = sum;
    for (i64 s : plan.tile_steps) hadd_inplace(ctx, aligned, hrot(ctx, sum, s, keys));
    if (plan.row_sum) hadd_inplace(ctx, aligned, hrot_rows(ctx, aligned, keys));
    out.cts[g] = std::move(aligned);
  });
  if (!plan.bias.empty()) {
    const Modulus& pm = ctx.p_ring().mod();
    std::vector<MessageVec> add(out.cts.size(), MessageVec(ctx.n(), 0));
    for (const LayoutPiece& pc : plan.out.pieces) {
      u64 v = pm.from_signed(plan.bias[pc.channel]);
      for (u32 y = pc.row_begin; y < pc.row_begin + pc.rows; ++y) {
        for (u32 xx = 0; xx < plan.out.width; ++xx) {
          add[pc.ct][plan.out.slot_in_piece(pc, y, xx)] = v;
        }
      }
    }
    for (std::size_t i = 0; i < out.cts.size(); ++i) {
      out.cts[i] = plain_add(ctx, out.cts[i], encode_batch(ctx, add[i]));
    }
  }
  return out;
}

}  // namespace flash
