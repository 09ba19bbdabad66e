// Writes the bundled toy network: conv-act-conv-act-pool-conv-fc on 3x32x32
// inputs. He-normal weights are quantized to 1 fraction bit, each layer
// scaled as far as a calibration set allows: activation inputs within 3/4
// of the codec range, the last conv within 8, logits within 1/8 of p.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "flash/model/model.hpp"
#include "flash/ring/params.hpp"

using namespace flash;

namespace {

std::vector<double> he_normal(std::size_t count, u32 fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  std::vector<double> w(count);
  for (auto& v : w) v = dist(rng);
  return w;
}

Tensor random_input(const Shape& s, int f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(s.size());
  for (auto& x : v) x = u(rng);
  return quantize_input(v, s, f);
}

i64 max_abs(const Tensor& t) {
  i64 m = 0;
  for (i64 v : t.data) m = std::max(m, v < 0 ? -v : v);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the toy model"};
  std::string out = "models/toy/model.json";
  u64 seed = 2024;
  int calib = 64;
  int frac = 6, wf = 1, ib = 0;
  app.add_option("--out", out, "manifest path");
  app.add_option("--seed", seed, "weight seed");
  app.add_option("--calibration", calib, "calibration inputs");
  app.add_option("--frac-bits", frac, "activation fraction bits");
  app.add_option("--weight-frac-bits", wf, "weight fraction bits");
  app.add_option("--int-bits", ib, "activation integer bits");
  CLI11_PARSE(app, argc, argv);

  const RingParams params = default_params();
  std::mt19937_64 rng(seed);
  Model m;
  m.name = "toy";
  m.input = Shape{3, 32, 32, 0, false};
  m.codec = FixedPointCodec{frac, ib, params.p};
  const u32 ch = 8;

  auto conv = [&](u32 h, u32 ci, u32 co) {
    LayerDesc d;
    d.kind = LayerKind::kConv;
    d.conv = ConvLayerSpec{h, h, 3, ci, co, {}, std::vector<i64>(co, 0), wf};
    return d;
  };
  auto act = [] {
    LayerDesc d;
    d.kind = LayerKind::kAct;
    d.rescale = true;
    return d;
  };
  m.layers.push_back(conv(32, 3, ch));
  m.layers.push_back(act());
  m.layers.push_back(conv(32, ch, ch));
  m.layers.push_back(act());
  LayerDesc pool;
  pool.kind = LayerKind::kAvgPool;
  pool.pool = 2;
  m.layers.push_back(pool);
  m.layers.push_back(conv(16, ch, ch));
  LayerDesc fc;
  fc.kind = LayerKind::kFc;
  fc.fc = FcSpec{ch * 16 * 16, 10, {}, std::vector<i64>(10, 0), wf};
  m.layers.push_back(fc);

  // Float weights; the pooling average is folded into the layer after it.
  std::vector<std::vector<double>> fw(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    LayerDesc& d = m.layers[i];
    if (d.kind == LayerKind::kConv) {
      u32 fan = d.conv.in_channels * 9;
      fw[i] = he_normal(static_cast<std::size_t>(d.conv.out_channels) * fan, fan, rng);
      if (i == 5) for (auto& v : fw[i]) v *= 0.25;
      d.conv.weights = quantize_weights(fw[i], wf);
    } else if (d.kind == LayerKind::kFc) {
      fw[i] = he_normal(static_cast<std::size_t>(d.fc.out_features) * d.fc.in_features,
                        d.fc.in_features, rng);
      d.fc.weights = quantize_weights(fw[i], wf);
    }
  }
  m.validate();

  std::mt19937_64 crng(seed + 1);
  std::vector<Tensor> inputs;
  for (int i = 0; i < calib; ++i) inputs.push_back(random_input(m.input, frac, crng));

  // Layer by layer: shrink until the layer output stays inside its budget,
  // 1.5 for activation inputs (int_bits = 1) and a quarter window otherwise.
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    LayerDesc& d = m.layers[i];
    if (d.kind != LayerKind::kConv && d.kind != LayerKind::kFc) continue;
    const bool feeds_act = i + 1 < m.layers.size() && m.layers[i + 1].kind == LayerKind::kAct;
    const int s = m.shapes[i].scale;
    const i64 limit = feeds_act ? static_cast<i64>(0.75 * std::ldexp(1.0, s + ib))
                      : d.kind == LayerKind::kConv ? (i64{8} << s)
                                                   : static_cast<i64>((params.p - 1) / 8);
    // Largest gain on the float weights whose quantized layer stays within
    // the limit, by bisection on log(gain).
    const std::vector<double> base = fw[i];
    auto set_gain = [&](double g) {
      std::vector<double> w = base;
      for (auto& v : w) v *= g;
      auto q = quantize_weights(w, wf);
      (d.kind == LayerKind::kConv ? d.conv.weights : d.fc.weights) = q;
    };
    auto worst_at = [&](double g) -> i64 {
      try {
        set_gain(g);
      } catch (const OverflowError&) {
        return -1;
      }
      i64 worst = 0;
      for (const Tensor& x : inputs) {
        try {
          worst = std::max(worst, max_abs(oracle_infer(m, x).trace[i]));
        } catch (const OverflowError&) {
          return -1;
        }
      }
      return worst;
    };
    auto ok = [&](i64 w) { return w >= 0 && w <= limit; };
    double lo = 1.0, hi = 1.0;
    while (!ok(worst_at(lo))) lo /= 2;
    hi = lo * 2;
    while (ok(worst_at(hi)) && hi < 1e6) hi *= 2;
    for (int iter = 0; iter < 30; ++iter) {
      double mid = std::sqrt(lo * hi);
      (ok(worst_at(mid)) ? lo : hi) = mid;
    }
    const i64 worst = worst_at(lo);
    std::printf("layer %zu: max |out| %lld of %lld at scale %d, gain %.4g\n", i,
                static_cast<long long>(worst), static_cast<long long>(limit), s, lo);
  }
  m.validate();
  save_model(m, out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}
