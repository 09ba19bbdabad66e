#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "flash/model/model.hpp"
#include "flash/ring/params.hpp"
#include "test_util.hpp"

#ifndef FLASH_SOURCE_DIR
#define FLASH_SOURCE_DIR "."
#endif

namespace flash {
namespace {

const u64 kP = default_params().p;

std::string toy_path() { return std::string(FLASH_SOURCE_DIR) + "/models/toy/model.json"; }

LayerDesc conv_layer(u32 h, u32 ci, u32 co, std::vector<i32> w, int wf, u32 k = 3) {
  LayerDesc d;
  d.kind = LayerKind::kConv;
  d.conv = ConvLayerSpec{h, h, k, ci, co, std::move(w), {}, wf};
  return d;
}

LayerDesc act_layer(bool rescale) {
  LayerDesc d;
  d.kind = LayerKind::kAct;
  d.rescale = rescale;
  return d;
}

Model identity_model() {
  Model m;
  m.input = Shape{1, 4, 4, 0, false};
  m.codec = FixedPointCodec{4, 1, kP};
  std::vector<i32> w(9, 0);
  w[4] = 1;
  m.layers = {conv_layer(4, 1, 1, w, 0), act_layer(true)};
  m.validate();
  return m;
}

TEST(Model, ToyLoads) {
  Model m = load_model(toy_path(), kP);
  EXPECT_EQ(m.name, "toy");
  ASSERT_EQ(m.layers.size(), 7u);
  int convs = 0, acts = 0;
  for (const LayerDesc& d : m.layers) {
    convs += d.kind == LayerKind::kConv;
    acts += d.kind == LayerKind::kAct;
  }
  EXPECT_EQ(convs, 3);
  EXPECT_EQ(acts, 2);
  EXPECT_EQ(m.layers[4].kind, LayerKind::kAvgPool);
  EXPECT_EQ(m.layers[6].kind, LayerKind::kFc);
  EXPECT_EQ(m.output().channels, 10u);
  EXPECT_EQ(m.output().scale, 8);
}

TEST(Model, SaveLoadRoundTrip) {
  Model m = load_model(toy_path(), kP);
  auto dir = std::filesystem::temp_directory_path() / "flash_model_rt";
  std::filesystem::create_directories(dir);
  save_model(m, (dir / "copy.json").string());
  Model back = load_model((dir / "copy.json").string(), kP);
  EXPECT_EQ(model_weight_blob(back), model_weight_blob(m));
  EXPECT_EQ(model_manifest_json(back, "x"), model_manifest_json(m, "x"));
}

TEST(Model, CorruptedInputsRejected) {
  Model m = load_model(toy_path(), kP);
  std::string manifest = model_manifest_json(m, "model.bin");
  std::vector<u8> blob = model_weight_blob(m);

  std::vector<u8> bad = blob;
  bad[0] = 'X';
  EXPECT_THROW(parse_model(manifest, bad, kP), FormatError);
  bad = blob;
  bad.resize(bad.size() - 7);
  EXPECT_THROW(parse_model(manifest, bad, kP), FormatError);
  bad = blob;
  bad.push_back(0);
  EXPECT_THROW(parse_model(manifest, bad, kP), FormatError);
  EXPECT_THROW(parse_model("{not json", blob, kP), FormatError);
  std::string wrong = manifest;
  wrong.replace(wrong.find("flash-model"), 11, "other-model");
  EXPECT_THROW(parse_model(wrong, blob, kP), FormatError);
  // Manifest and blob disagree on a layer's output channels.
  std::string chans = manifest;
  chans.replace(chans.find("\"out_channels\": 8"), 17, "\"out_channels\": 9");
  try {
    parse_model(chans, blob, kP);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
}

TEST(Model, DimensionMismatchNamesLayer) {
  Model m = identity_model();
  m.layers.push_back(conv_layer(4, 2, 1, std::vector<i32>(18, 0), 0));
  try {
    m.validate();
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2 (conv)"), std::string::npos) << e.what();
  }
}

TEST(Model, ScaleBudgetViolationNamesLayer) {
  Model m = identity_model();
  m.layers[0].conv.weight_scale = 3;  // activation at scale 7
  try {
    m.validate();
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1 (act)"), std::string::npos) << e.what();
  }
  // Without rescale the whole half window is usable.
  m.layers[1].rescale = false;
  EXPECT_NO_THROW(m.validate());
}

TEST(Model, GraphRules) {
  Model m = identity_model();
  m.layers.push_back(act_layer(true));
  EXPECT_THROW(m.validate(), FormatError);  // act after act

  // Residual block: x -> conv -> act -> conv -> act -> + (layer 1 output).
  Model r;
  r.input = Shape{2, 8, 8, 0, false};
  r.codec = FixedPointCodec{4, 1, kP};
  r.layers = {conv_layer(8, 2, 2, std::vector<i32>(36, 1), 2), act_layer(true),
              conv_layer(8, 2, 2, std::vector<i32>(36, 1), 2), act_layer(true)};
  LayerDesc res;
  res.kind = LayerKind::kResidual;
  res.from = 1;
  r.layers.push_back(res);
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(r.output().scale, 4);
  r.layers.back().from = 0;  // conv output sits at scale 6
  EXPECT_THROW(r.validate(), FormatError);
  r.layers.back().from = 7;
  EXPECT_THROW(r.validate(), FormatError);
}

TEST(Oracle, ZeroInputZeroLogits) {
  Model m = load_model(toy_path(), kP);
  auto res = oracle_infer(m, Tensor(3, 32, 32));
  for (i64 v : res.logits) EXPECT_EQ(v, 0);
}

TEST(Oracle, IdentityConvActivation) {
  Model m = identity_model();
  Tensor x(1, 4, 4);
  for (auto& v : x.data) v = 8;  // 0.5 at 4 fraction bits
  auto res = oracle_infer(m, x);
  EXPECT_EQ(res.scale, 4);
  for (i64 v : res.logits) EXPECT_EQ(v, 12);  // 0.75
  // Without rescale the result stays at scale 8: 0.75 * 256.
  m.layers[1].rescale = false;
  m.validate();
  for (i64 v : oracle_infer(m, x).logits) EXPECT_EQ(v, 192);
}

TEST(Oracle, GeneralPolynomial) {
  Model m = identity_model();
  m.layers[1].rescale = false;
  m.validate();
  Tensor x(1, 4, 4);
  for (u32 i = 0; i < 16; ++i) x.data[i] = static_cast<i64>(i) - 8;
  auto res = oracle_infer(m, x, ActPoly{3, -2, 1});
  for (u32 i = 0; i < 16; ++i) {
    i64 a = x.data[i];
    EXPECT_EQ(res.logits[i], 3 * a * a - 2 * a * 16 + 256);
  }
}

TEST(Oracle, OverflowNamesLayer) {
  Model m = identity_model();
  Tensor x(1, 4, 4);
  x.data[5] = 2000;  // squares far past the quarter window
  try {
    oracle_infer(m, x);
    FAIL();
  } catch (const OverflowError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
}

TEST(Oracle, BoundsContainFloorResult) {
  Model m = load_model(toy_path(), kP);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    Tensor x = testing::random_tensor(3, 32, 32, 16, rng);
    auto res = oracle_infer(m, x);
    auto b = oracle_bounds(m, x);
    for (std::size_t i = 0; i < res.logits.size(); ++i) {
      EXPECT_LE(b.lo[i], res.logits[i]);
      EXPECT_GE(b.hi[i], res.logits[i]);
    }
  }
  // No truncation: the interval is a point.
  Model exact = identity_model();
  exact.layers[1].rescale = false;
  exact.validate();
  Tensor x = testing::random_tensor(1, 4, 4, 16, rng);
  auto b = oracle_bounds(exact, x);
  EXPECT_EQ(b.lo, b.hi);
  EXPECT_EQ(b.lo, oracle_infer(exact, x).logits);
}

TEST(Oracle, ReplayAcceptsOracleAndFlagsPerturbation) {
  Model m = load_model(toy_path(), kP);
  std::mt19937_64 rng(4);
  Tensor x = testing::random_tensor(3, 32, 32, 64, rng);
  auto res = oracle_infer(m, x);
  ReplayReport ok = replay_check(m, x, res.trace);
  EXPECT_TRUE(ok.ok) << ok.first_mismatch;
  EXPECT_GT(ok.truncated_values, 0u);

  // One below the oracle is one below floor wherever the oracle rounded down.
  auto down = res.trace;
  for (i64& v : down[1].data) v -= 1;
  // Later layers must then follow from the perturbed values.
  for (std::size_t i = 2; i < m.layers.size(); ++i) down[i] = oracle_layer(m, i, down[i - 1], down);
  ReplayReport r1 = replay_check(m, x, down);
  EXPECT_FALSE(r1.ok);

  auto bad = res.trace;
  bad[0].data[5] += 1;
  ReplayReport r2 = replay_check(m, x, bad);
  EXPECT_FALSE(r2.ok);
  EXPECT_NE(r2.first_mismatch.find("layer 0"), std::string::npos);

  auto off = res.trace;
  off[1].data[7] += 2;
  ReplayReport r3 = replay_check(m, x, off);
  EXPECT_FALSE(r3.ok);
  EXPECT_NE(r3.first_mismatch.find("layer 1"), std::string::npos);
}

TEST(Fold, IdentityBatchNorm) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> w(2 * 9);
  for (auto& v : w) v = nd(rng);
  BatchNorm bn{{1, 1}, {0, 0}, {0, 0}, {1, 1}, 0.0};
  FoldedConv f = fold_bn_scale(w, {}, bn, {1, 1}, 2);
  EXPECT_EQ(f.weights, w);
  EXPECT_EQ(quantize_weights(f.weights, 4), quantize_weights(w, 4));
  EXPECT_TRUE(f.degenerate.empty());
}

TEST(Fold, MatchesFloatComposition) {
  // conv -> BN -> scale on a single output position, in floating point.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  const u32 co = 3, per = 4;
  std::vector<double> w(co * per), b(co), x(per);
  for (auto& v : w) v = 0.3 * nd(rng);
  for (auto& v : b) v = nd(rng);
  for (auto& v : x) v = nd(rng);
  BatchNorm bn{{1.5, 0.7, -0.2}, {0.1, -0.3, 0.2}, {0.05, 0.4, -0.1}, {0.8, 1.3, 0.5}, 1e-5};
  std::vector<double> s = {0.1, 0.5, 2.0};
  FoldedConv f = fold_bn_scale(w, b, bn, s, co);
  for (u32 o = 0; o < co; ++o) {
    double y = b[o], yf = f.bias[o];
    for (u32 t = 0; t < per; ++t) {
      y += w[o * per + t] * x[t];
      yf += f.weights[o * per + t] * x[t];
    }
    double want = ((y - bn.mean[o]) / std::sqrt(bn.var[o] + bn.eps) * bn.gamma[o] + bn.beta[o]) * s[o];
    EXPECT_NEAR(yf, want, 1e-12);
  }
  // Quantized at 6 bits each weight moves by at most half a step.
  auto q = quantize_weights(f.weights, 6);
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_LE(std::abs(q[i] / 64.0 - f.weights[i]), 0.5 / 64 + 1e-12);
  }
}

TEST(Fold, ZeroScaleIsDegenerate) {
  std::vector<double> w(2 * 9, 0.5);
  BatchNorm bn{{1, 1}, {1, 1}, {0, 0}, {1, 1}, 0.0};
  FoldedConv f = fold_bn_scale(w, {}, bn, {0, 1}, 2);
  ASSERT_EQ(f.degenerate, std::vector<u32>{0});
  for (u32 t = 0; t < 9; ++t) EXPECT_EQ(f.weights[t], 0.0);
  EXPECT_EQ(f.bias[0], 0.0);
  EXPECT_THROW(quantize_weights({40.0}, 4), OverflowError);
}

}  // namespace
}  // namespace flash
