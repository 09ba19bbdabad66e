#include <algorithm>
#include <cmath>
#include <functional>

#include "flash/model/model.hpp"

namespace flash {

namespace {

std::string where(std::size_t i, LayerKind k) {
  return "layer " + std::to_string(i) + " (" + layer_kind_name(k) + "): ";
}

void check_window(const Tensor& t, i64 bound, std::size_t i, LayerKind k) {
  for (i64 v : t.data) {
    if (v > bound || v < -bound) {
      throw OverflowError(where(i, k) + "value " + std::to_string(v) +
                          " leaves the plaintext window of +-" + std::to_string(bound));
    }
  }
}

Tensor as_flat(std::vector<i64> v) {
  Tensor t(static_cast<u32>(v.size()), 1, 1);
  t.data = std::move(v);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

}  // namespace

Tensor oracle_layer(const Model& model, std::size_t i, const Tensor& in,
                    const std::vector<Tensor>& trace, ActPoly act) {
  if (model.shapes.size() != model.layers.size()) throw UsageError("model not validated");
  const i64 half = static_cast<i64>((model.codec.p - 1) / 2);
  const i64 quarter = static_cast<i64>(model.codec.rescale_bound());
  const LayerDesc& l = model.layers[i];
  const int scale = i == 0 ? model.input.scale : model.shapes[i - 1].scale;
  Tensor cur;
  switch (l.kind) {
    case LayerKind::kConv: cur = conv_oracle(in, l.conv); break;
    case LayerKind::kAvgPool: cur = avg_pool_oracle(in, l.pool); break;
    case LayerKind::kFc: cur = as_flat(fc_oracle(in, l.fc)); break;
    case LayerKind::kResidual: cur = add(in, trace.at(l.from)); break;
    case LayerKind::kAct: {
      cur = in;
      const i64 lin = act.beta << scale;
      const i64 cst = act.gamma << (2 * scale);
      for (i64& v : cur.data) v = act.alpha * v * v + lin * v + cst;
      if (l.rescale) {
        check_window(cur, quarter, i, l.kind);
        const int k = model.codec.truncation_bits(scale);
        const i64 half_ulp = k > 0 ? i64{1} << (k - 1) : 0;
        for (i64& v : cur.data) v = (v + half_ulp) >> k;
      }
      break;
    }
  }
  check_window(cur, half, i, l.kind);
  return cur;
}

OracleResult oracle_infer(const Model& model, const Tensor& input, ActPoly act) {
  const Shape& in = model.input;
  if (input.channels != in.channels || input.height != in.height || input.width != in.width) {
    throw UsageError("input shape does not match the model");
  }
  if (model.shapes.size() != model.layers.size()) throw UsageError("model not validated");
  check_window(input, static_cast<i64>((model.codec.p - 1) / 2), 0, LayerKind::kConv);
  OracleResult res;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    res.trace.push_back(oracle_layer(model, i, i == 0 ? input : res.trace.back(), res.trace, act));
  }
  res.logits = res.trace.empty() ? input.data : res.trace.back().data;
  res.scale = model.output().scale;
  return res;
}

ReplayReport replay_check(const Model& model, const Tensor& input,
                          const std::vector<Tensor>& observed) {
  if (observed.size() != model.layers.size()) throw UsageError("one tensor per layer expected");
  ReplayReport rep;
  auto fail = [&](std::size_t i, const std::string& what) {
    if (rep.ok) rep.first_mismatch = where(i, model.layers[i].kind) + what;
    rep.ok = false;
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerDesc& l = model.layers[i];
    const Tensor& in = i == 0 ? input : observed[i - 1];
    const Tensor& got = observed[i];
    if (l.kind == LayerKind::kAct && l.rescale) {
      const int scale = i == 0 ? model.input.scale : model.shapes[i - 1].scale;
      const int k = model.codec.truncation_bits(scale);
      if (got.data.size() != in.data.size()) {
        fail(i, "size differs");
        continue;
      }
      for (std::size_t t = 0; t < in.data.size(); ++t) {
        const i64 a = in.data[t];
        const i64 z = a * a + (a << scale);
        const i64 low = z >> k;
        ++rep.truncated_values;
        if (got.data[t] == low + 1) {
          ++rep.rounded_up;
        } else if (got.data[t] != low) {
          fail(i, "value " + std::to_string(t) + " is " + std::to_string(got.data[t]) +
                      ", expected " + std::to_string(low) + " or one more");
        }
      }
      continue;
    }
    Tensor want;
    try {
      want = oracle_layer(model, i, in, observed);
    } catch (const OverflowError& e) {
      fail(i, e.what());
      continue;
    }
    if (!(want == got)) fail(i, "differs from the oracle");
  }
  return rep;
}

namespace {

struct Interval {
  Tensor lo, hi;
};

Tensor signed_sum(const Tensor& lo, const Tensor& hi, bool upper,
                  const std::function<Tensor(const Tensor&)>& linear_pos,
                  const std::function<Tensor(const Tensor&)>& linear_neg) {
  // Upper bound: positive weights see hi, negative see lo.
  return add(linear_pos(upper ? hi : lo), linear_neg(upper ? lo : hi));
}

ConvLayerSpec split_conv(const ConvLayerSpec& c, bool positive, bool with_bias) {
  ConvLayerSpec out = c;
  for (i32& w : out.weights) w = (positive ? w > 0 : w < 0) ? w : 0;
  if (!with_bias) out.bias.clear();
  return out;
}

FcSpec split_fc(const FcSpec& f, bool positive, bool with_bias) {
  FcSpec out = f;
  for (i32& w : out.weights) w = (positive ? w > 0 : w < 0) ? w : 0;
  if (!with_bias) out.bias.clear();
  return out;
}

}  // namespace

LogitBounds oracle_bounds(const Model& model, const Tensor& input) {
  if (model.shapes.size() != model.layers.size()) throw UsageError("model not validated");
  std::vector<Interval> trace;
  Interval cur{input, input};
  int scale = model.input.scale;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerDesc& l = model.layers[i];
    switch (l.kind) {
      case LayerKind::kConv: {
        ConvLayerSpec pos = split_conv(l.conv, true, true);
        ConvLayerSpec neg = split_conv(l.conv, false, false);
        auto fp = [&](const Tensor& t) { return conv_oracle(t, pos); };
        auto fn = [&](const Tensor& t) { return conv_oracle(t, neg); };
        cur = {signed_sum(cur.lo, cur.hi, false, fp, fn), signed_sum(cur.lo, cur.hi, true, fp, fn)};
        break;
      }
      case LayerKind::kFc: {
        FcSpec pos = split_fc(l.fc, true, true);
        FcSpec neg = split_fc(l.fc, false, false);
        auto fp = [&](const Tensor& t) { return as_flat(fc_oracle(t, pos)); };
        auto fn = [&](const Tensor& t) { return as_flat(fc_oracle(t, neg)); };
        cur = {signed_sum(cur.lo, cur.hi, false, fp, fn), signed_sum(cur.lo, cur.hi, true, fp, fn)};
        break;
      }
      case LayerKind::kAvgPool:
        cur = {avg_pool_oracle(cur.lo, l.pool), avg_pool_oracle(cur.hi, l.pool)};
        break;
      case LayerKind::kResidual:
        cur = {add(cur.lo, trace[l.from].lo), add(cur.hi, trace[l.from].hi)};
        break;
      case LayerKind::kAct: {
        const i64 lin = i64{1} << scale;
        auto f = [&](i64 a) { return a * a + lin * a; };
        const int k = l.rescale ? model.codec.truncation_bits(scale) : 0;
        for (std::size_t t = 0; t < cur.lo.data.size(); ++t) {
          i64 a = cur.lo.data[t], b = cur.hi.data[t];
          i64 lo = std::min(f(a), f(b)), hi = std::max(f(a), f(b));
          // Vertex of a^2 + 2^s a at -2^(s-1).
          i64 v = -(lin / 2);
          if (a <= v && v <= b) lo = std::min(lo, f(v));
          if (l.rescale) {
            lo >>= k;
            hi = (hi >> k) + 1;
          }
          cur.lo.data[t] = lo;
          cur.hi.data[t] = hi;
        }
        break;
      }
    }
    scale = model.shapes[i].scale;
    trace.push_back(cur);
  }
  return {cur.lo.data, cur.hi.data};
}

Tensor quantize_input(const std::vector<double>& values, const Shape& shape, int frac_bits) {
  if (values.size() != shape.size()) throw UsageError("input size does not match the model");
  Tensor t(shape.channels, shape.height, shape.width);
  for (std::size_t i = 0; i < values.size(); ++i) {
    t.data[i] = static_cast<i64>(std::llround(std::ldexp(values[i], frac_bits)));
  }
  return t;
}

FoldedConv fold_bn_scale(const std::vector<double>& weights, const std::vector<double>& bias,
                         const BatchNorm& bn, const std::vector<double>& scale,
                         u32 out_channels) {
  if (out_channels == 0 || weights.size() % out_channels != 0) {
    throw UsageError("weight count is not a multiple of the output channels");
  }
  for (const auto* v : {&bn.gamma, &bn.beta, &bn.mean, &bn.var, &scale}) {
    if (v->size() != out_channels) throw UsageError("per-channel parameter count mismatch");
  }
  if (!bias.empty() && bias.size() != out_channels) throw UsageError("bias count mismatch");
  const std::size_t per = weights.size() / out_channels;
  FoldedConv out{weights, std::vector<double>(out_channels), {}};
  for (u32 o = 0; o < out_channels; ++o) {
    if (bn.var[o] + bn.eps <= 0) throw UsageError("batch norm variance must be positive");
    const double g = bn.gamma[o] * scale[o] / std::sqrt(bn.var[o] + bn.eps);
    if (!std::isfinite(g)) throw OverflowError("folded scale overflows");
    if (scale[o] == 0) out.degenerate.push_back(o);
    for (std::size_t t = 0; t < per; ++t) out.weights[o * per + t] *= g;
    const double b = bias.empty() ? 0.0 : bias[o];
    out.bias[o] = (b - bn.mean[o]) * g + bn.beta[o] * scale[o];
  }
  return out;
}

std::vector<i32> quantize_weights(const std::vector<double>& w, int weight_frac_bits) {
  std::vector<i32> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    double v = std::nearbyint(std::ldexp(w[i], weight_frac_bits));
    if (!(v >= -128 && v <= 127)) {
      throw OverflowError("weight " + std::to_string(w[i]) + " does not fit 8 bits at scale " +
                          std::to_string(weight_frac_bits));
    }
    out[i] = static_cast<i32>(v);
  }
  return out;
}

std::vector<i64> quantize_bias(const std::vector<double>& b, int scale) {
  std::vector<i64> out(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    out[i] = static_cast<i64>(std::llround(std::ldexp(b[i], scale)));
  }
  return out;
}

}  // namespace flash
