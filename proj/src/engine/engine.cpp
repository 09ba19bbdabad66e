#include "flash/engine/engine.hpp"

#include <chrono>

#include "flash/conv/proposed.hpp"

namespace flash {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Need {
  u32 pad = 0;
  u32 align = 1;
};

// Padding and band alignment layer i needs on its input.
Need input_need(const Model& m, std::size_t i) {
  if (i >= m.layers.size()) return {};
  const LayerDesc& l = m.layers[i];
  switch (l.kind) {
    case LayerKind::kConv: return {l.conv.pad(), 1};
    case LayerKind::kAvgPool: {
      Need next = input_need(m, i + 1);
      return {next.pad * l.pool, next.align * l.pool};
    }
    case LayerKind::kResidual: return input_need(m, i + 1);
    case LayerKind::kAct:
    case LayerKind::kFc: return {};
  }
  return {};
}

std::string layer_name(const Model& m, std::size_t i) {
  std::size_t count = 0;
  for (std::size_t j = 0; j <= i; ++j) count += m.layers[j].kind == m.layers[i].kind;
  return std::string(layer_kind_name(m.layers[i].kind)) + std::to_string(count);
}

// Random values in every slot the layout does not use.
void sanitize(const Context& ctx, std::vector<Ciphertext>& cts, const Layout& layout,
              Prng& prng) {
  std::vector<std::vector<bool>> used(cts.size(), std::vector<bool>(ctx.n(), false));
  for (u32 c = 0; c < layout.channels; ++c) {
    for (u32 y = 0; y < layout.height; ++y) {
      for (u32 x = 0; x < layout.width; ++x) {
        SlotRef r = layout.locate(c, y, x);
        used[r.ct][r.slot] = true;
      }
    }
  }
  for (std::size_t k = 0; k < cts.size(); ++k) {
    MessageVec m(ctx.n(), 0);
    for (u64 i = 0; i < ctx.n(); ++i) {
      if (!used[k][i]) m[i] = prng.uniform(ctx.p());
    }
    Ciphertext ct = cts[k].domain() == Domain::kCoefficient ? cts[k] : to_coeff(ctx, cts[k]);
    cts[k] = plain_add(ctx, ct, encode_direct(ctx, m));
  }
}

}  // namespace

Layout fc_output_layout(const Context& ctx, u32 features) {
  Layout l;
  l.channels = features;
  l.height = l.width = 1;
  l.pad = 0;
  l.stride = 1;
  l.row_pitch = 1;
  l.tile_rows = 1;
  l.lane_size = static_cast<u32>(ctx.n());
  l.lanes = 1;
  l.per_lane = 1;
  l.band_rows = 1;
  l.ct_count = features;
  for (u32 o = 0; o < features; ++o) l.pieces.push_back({o, 0, o, 0, 1, 0});
  return l;
}

InferencePlan plan_inference(const Context& ctx, const Model& model) {
  if (model.shapes.size() != model.layers.size()) throw UsageError("model not validated");
  InferencePlan plan;
  const Shape& in = model.input;
  Need need = input_need(model, 0);
  plan.input = direct_layout(ctx, in.channels, in.height, in.width, need.pad, need.align);
  plan.zeros_per_run = plan.input.ct_count;
  plan.keep.assign(model.layers.size(), false);
  plan.maps.resize(model.layers.size());
  // An activation's output layout must suit its consumer; the two operands of
  // a residual must agree, so their needs are merged.
  std::vector<Need> act_need(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) act_need[i] = input_need(model, i + 1);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t j = 0; j < model.layers.size(); ++j) {
      const LayerDesc& r = model.layers[j];
      if (r.kind != LayerKind::kResidual) continue;
      Need& a = act_need[r.from];
      Need& b = act_need[j - 1];
      Need m{std::max(a.pad, b.pad), std::max(a.align, b.align)};
      if (m.pad != a.pad || m.align != a.align || m.pad != b.pad || m.align != b.align) {
        a = b = m;
        changed = true;
      }
    }
  }
  Layout cur = plan.input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerDesc& l = model.layers[i];
    const Shape& s = model.shapes[i];
    const std::string at = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::kConv:
        if (cur.lanes != 1 || cur.pad < l.conv.pad() * cur.stride) {
          throw UsageError(at + "input layout cannot feed the convolution");
        }
        cur = conv_output_layout(cur, l.conv.out_channels);
        break;
      case LayerKind::kAvgPool: {
        Layout next = cur;
        next.height /= l.pool;
        next.width /= l.pool;
        if (cur.band_rows % l.pool != 0) throw UsageError(at + "bands not aligned to the pool");
        next.band_rows /= l.pool;
        next.stride *= l.pool;
        for (LayoutPiece& pc : next.pieces) {
          pc.row_begin /= l.pool;
          pc.rows /= l.pool;
        }
        cur = next;
        break;
      }
      case LayerKind::kFc: cur = fc_output_layout(ctx, l.fc.out_features); break;
      case LayerKind::kResidual:
        plan.keep[l.from] = true;
        if (!(plan.outputs[l.from] == cur)) {
          throw UsageError(at + "residual operands are laid out differently");
        }
        break;
      case LayerKind::kAct: {
        const Need n = act_need[i];
        Layout dst = direct_layout(ctx, s.channels, s.height, s.width, n.pad, n.align);
        plan.maps[i] = relayout_map(cur, dst);
        plan.zeros_per_run += kZerosPerActivation * dst.ct_count;
        if (l.rescale) plan.zeros_per_run += kZerosPerRescale * dst.ct_count;
        cur = dst;
        break;
      }
    }
    plan.outputs.push_back(cur);
  }
  return plan;
}

Handshake make_handshake(const Context& ctx, const Model& model) {
  return Handshake{kProtocolVersion, ctx.n(), ctx.q(), ctx.p(),
                   static_cast<u32>(model.codec.frac_bits)};
}

namespace {

// Round codes inside act-round and rescale frames.
enum : u8 {
  kRoundMasked = 0,
  kRoundSquare = 1,
  kRoundBatch = 2,
  kRoundCross = 3,
  kRoundCrossDirect = 4,
  kRoundRescaleMasked = 0,
  kRoundRescaleLow = 1,
  kRoundRescaleDiff = 2,
  kRoundRescaleSelected = 3,
  kRoundRescaleDirect = 4,
};

}  // namespace

ServerRunner::ServerRunner(ContextPtr ctx, const Model& model, EngineOptions options,
                           Prng& prng)
    : ctx_(std::move(ctx)), model_(model), options_(options), prng_(prng),
      plan_(plan_inference(*ctx_, model)) {}

void ServerRunner::offline() {
  act_.assign(model_.layers.size(), std::nullopt);
  rescale_.assign(model_.layers.size(), std::nullopt);
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const LayerDesc& l = model_.layers[i];
    if (l.kind != LayerKind::kAct) continue;
    const int scale = i == 0 ? model_.input.scale : model_.shapes[i - 1].scale;
    act_[i].emplace(ctx_, frame_layer(i), *plan_.maps[i], scale, prng_);
    if (l.rescale) {
      rescale_[i].emplace(ctx_, frame_layer(i), plan_.outputs[i].ct_count,
                          model_.codec.truncation_bits(scale), prng_);
    }
  }
  ready_ = true;
}

void ServerRunner::run(Endpoint& ep) {
  if (!ready_) throw ProtocolError("server masks not prepared; call offline() first");
  ready_ = false;
  const Context& ctx = *ctx_;
  const bool cmp = options_.seed_compress;
  TranscriptStats& st = ep.stats();
  ep.set_phase(Phase::kOnline);

  auto t0 = Clock::now();
  PackedTensor cur{recv_ciphertexts(ep, ctx, FrameKind::kInput, 0, 0, plan_.input.ct_count),
                   plan_.input};
  st.layer(0).name = "input";
  st.layer(0).seconds += since(t0);
  std::vector<PackedTensor> kept(model_.layers.size());

  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const LayerDesc& l = model_.layers[i];
    const u32 id = frame_layer(i);
    st.layer(id).name = layer_name(model_, i);
    t0 = Clock::now();
    switch (l.kind) {
      case LayerKind::kConv:
        cur = conv_proposed(ctx, cur, l.conv, {options_.lazy, options_.threads});
        break;
      case LayerKind::kAvgPool: cur = avg_pool(ctx, cur, l.pool); break;
      case LayerKind::kFc:
        cur = PackedTensor{fully_connected(ctx, cur, l.fc, options_.threads),
                           plan_.outputs[i]};
        break;
      case LayerKind::kResidual:
        for (std::size_t k = 0; k < cur.cts.size(); ++k) {
          cur.cts[k] = hadd(ctx, cur.cts[k], kept[l.from].cts[k]);
        }
        break;
      case LayerKind::kAct: {
        ActivationSession& s = *act_[i];
        const std::size_t dst = plan_.outputs[i].ct_count;
        send_ciphertexts(ep, FrameKind::kActRound, id, kRoundMasked, s.server_round1(cur.cts), cmp);
        auto square = recv_ciphertexts(ep, ctx, FrameKind::kActRound, id, kRoundSquare, dst);
        auto batch = recv_ciphertexts(ep, ctx, FrameKind::kActRound, id, kRoundBatch, dst);
        send_ciphertexts(ep, FrameKind::kActRound, id, kRoundCross, s.server_round2(batch), cmp);
        auto back = recv_ciphertexts(ep, ctx, FrameKind::kActRound, id, kRoundCrossDirect, dst);
        std::vector<Ciphertext> out = s.server_finalize(square, back);
        act_[i].reset();
        if (l.rescale) {
          RescaleSession& r = *rescale_[i];
          send_ciphertexts(ep, FrameKind::kRescale, id, kRoundRescaleMasked, r.server_mask(out), cmp);
          auto low = recv_ciphertexts(ep, ctx, FrameKind::kRescale, id, kRoundRescaleLow, dst);
          auto diff = recv_ciphertexts(ep, ctx, FrameKind::kRescale, id, kRoundRescaleDiff, dst);
          send_ciphertexts(ep, FrameKind::kRescale, id, kRoundRescaleSelected,
                           r.server_select(low, diff), cmp);
          auto direct = recv_ciphertexts(ep, ctx, FrameKind::kRescale, id, kRoundRescaleDirect, dst);
          out = r.server_unmask(direct);
          rescale_[i].reset();
        }
        cur = PackedTensor{std::move(out), plan_.outputs[i]};
        break;
      }
    }
    if (!(cur.layout == plan_.outputs[i])) {
      throw UsageError("layer " + std::to_string(i) + ": layout differs from the plan");
    }
    if (plan_.keep[i]) kept[i] = cur;
    if (observer_) observer_(i, cur);
    st.layer(id).seconds += since(t0);
  }

  const u32 out_id = frame_layer(model_.layers.size());
  st.layer(out_id).name = "logits";
  t0 = Clock::now();
  sanitize(ctx, cur.cts, cur.layout, prng_);
  send_ciphertexts(ep, FrameKind::kConvResult, out_id, 0, cur.cts, cmp);
  st.layer(out_id).seconds += since(t0);
}

ClientRunner::ClientRunner(ContextPtr ctx, const Model& model, const SecretKey& sk,
                           EngineOptions options, Prng& prng)
    : ctx_(std::move(ctx)), model_(model), sk_(sk), options_(options), prng_(prng),
      plan_(plan_inference(*ctx_, model)) {}

void ClientRunner::offline() {
  std::size_t missing = plan_.zeros_per_run > pool_.size() ? plan_.zeros_per_run - pool_.size() : 0;
  if (missing > 0) pool_.add(precompute_zero(*ctx_, sk_, prng_, missing));
}

ClientResult ClientRunner::run(Endpoint& ep, const Tensor& input) {
  if (pool_.size() < plan_.zeros_per_run) {
    throw ProtocolError("zero-ciphertext pool too small; call offline() first");
  }
  const Context& ctx = *ctx_;
  const bool cmp = options_.seed_compress;
  TranscriptStats& st = ep.stats();
  ep.set_phase(Phase::kOnline);

  auto t0 = Clock::now();
  std::vector<Ciphertext> in;
  for (const MessageVec& m : pack_plain(ctx, plan_.input, input)) {
    ZeroCiphertext z = pool_.take();
    in.push_back(encrypt_online(ctx, encode_direct(ctx, m), z));
  }
  send_ciphertexts(ep, FrameKind::kInput, 0, 0, in, cmp);
  st.layer(0).name = "input";
  st.layer(0).seconds += since(t0);

  Layout cur = plan_.input;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const LayerDesc& l = model_.layers[i];
    const u32 id = frame_layer(i);
    LayerStats& ls = st.layer(id);
    ls.name = layer_name(model_, i);
    t0 = Clock::now();
    if (l.kind == LayerKind::kAct) {
      const int scale = i == 0 ? model_.input.scale : model_.shapes[i - 1].scale;
      auto masked = recv_ciphertexts(ep, ctx, FrameKind::kActRound, id, kRoundMasked, cur.ct_count);
      ClientRound1 r1 = client_round1(ctx, masked, sk_, pool_, *plan_.maps[i], scale, &ls.budgets);
      send_ciphertexts(ep, FrameKind::kActRound, id, kRoundSquare, r1.square, cmp);
      send_ciphertexts(ep, FrameKind::kActRound, id, kRoundBatch, r1.masked_batch, cmp);
      const std::size_t dst = plan_.outputs[i].ct_count;
      auto cross = recv_ciphertexts(ep, ctx, FrameKind::kActRound, id, kRoundCross, dst);
      send_ciphertexts(ep, FrameKind::kActRound, id, kRoundCrossDirect,
                       client_round2(ctx, cross, sk_, pool_, &ls.budgets), cmp);
      if (l.rescale) {
        const int k = model_.codec.truncation_bits(scale);
        auto y = recv_ciphertexts(ep, ctx, FrameKind::kRescale, id, kRoundRescaleMasked, dst);
        ClientRescale c = client_rescale(ctx, y, sk_, pool_, k, &ls.budgets);
        send_ciphertexts(ep, FrameKind::kRescale, id, kRoundRescaleLow, c.low, cmp);
        send_ciphertexts(ep, FrameKind::kRescale, id, kRoundRescaleDiff, c.diff, cmp);
        auto sel = recv_ciphertexts(ep, ctx, FrameKind::kRescale, id, kRoundRescaleSelected, dst);
        send_ciphertexts(ep, FrameKind::kRescale, id, kRoundRescaleDirect,
                         client_round2(ctx, sel, sk_, pool_, &ls.budgets), cmp);
      }
    }
    cur = plan_.outputs[i];
    ls.seconds += since(t0);
  }

  const u32 out_id = frame_layer(model_.layers.size());
  LayerStats& ls = st.layer(out_id);
  ls.name = "logits";
  t0 = Clock::now();
  PackedTensor out{recv_ciphertexts(ep, ctx, FrameKind::kConvResult, out_id, 0, cur.ct_count), cur};
  for (const Ciphertext& ct : out.cts) ls.budgets.push_back(noise_budget(ctx, ct, sk_));
  Tensor t = unpack(ctx, out, sk_);
  ls.seconds += since(t0);
  return {t.data, model_.output().scale};
}

}  // namespace flash
