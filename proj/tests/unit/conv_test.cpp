#include <gtest/gtest.h>

#include "flash/conv/conventional.hpp"
#include "flash/conv/linear.hpp"
#include "flash/conv/proposed.hpp"
#include "test_util.hpp"

namespace flash {
namespace {

using testing::centered;
using testing::paper_context;
using testing::random_layer;
using testing::random_tensor;

struct ConvFixture : ::testing::Test {
  ContextPtr ctx = paper_context();
  Prng prng = Prng::from_u64(100);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng{100};
};

TEST(Layout, TileGeometry) {
  auto ctx = paper_context();
  Layout l = direct_layout(*ctx, 1, 4, 4, 1);
  EXPECT_EQ(l.row_pitch, 6u);
  EXPECT_EQ(l.tile_rows, 6u);
  EXPECT_EQ(l.tile_size() - 16, 20u);
  Layout many = direct_layout(*ctx, 100, 4, 4, 1);
  EXPECT_EQ(many.per_lane, 56u);
  EXPECT_EQ(many.ct_count, 2u);
  EXPECT_EQ(many.pieces[57].ct, 1u);
  EXPECT_EQ(many.pieces[57].base, 36u);
}

TEST(Layout, BandsWhenTileExceedsLane) {
  auto ctx = paper_context();
  Layout l = direct_layout(*ctx, 2, 64, 64, 1);
  EXPECT_TRUE(l.banded());
  EXPECT_EQ(l.tile_rows, 31u);
  EXPECT_EQ(l.band_rows, 29u);
  EXPECT_EQ(l.bands(), 3u);
  EXPECT_EQ(l.ct_count, 6u);
  Layout b = batch_layout(*ctx, 2, 64, 64, 1);
  EXPECT_EQ(b.band_rows, 13u);
  EXPECT_EQ(b.bands(), 5u);
  EXPECT_EQ(b.ct_count, 6u);
  Layout aligned = direct_layout(*ctx, 1, 64, 64, 0, 8);
  EXPECT_EQ(aligned.band_rows % 8, 0u);
}

TEST(Layout, PackUnpackRoundTrip) {
  auto ctx = paper_context();
  std::mt19937_64 rng(1);
  for (auto [c, h, w, pad] : std::vector<std::tuple<u32, u32, u32, u32>>{
           {3, 4, 4, 1}, {70, 4, 4, 1}, {5, 8, 8, 2}, {2, 48, 48, 1}, {1, 64, 64, 0}}) {
    Tensor t = random_tensor(c, h, w, 1000, rng);
    for (const Layout& l : {direct_layout(*ctx, c, h, w, pad), batch_layout(*ctx, c, h, w, pad)}) {
      auto slots = pack_plain(*ctx, l, t);
      EXPECT_EQ(unpack_plain(*ctx, l, slots), t);
      // Borders stay zero: nonzero count equals values plus halo copies.
      std::size_t nonzero = 0;
      for (const auto& m : slots) {
        for (u64 v : m) nonzero += v != 0;
      }
      EXPECT_LE(nonzero, t.size() + 2 * pad * w * c * l.bands());
    }
  }
}

TEST_F(ConvFixture, IdentityKernel) {
  ConvLayerSpec layer = random_layer(8, 8, 1, 1, 3, 0, rng);
  layer.weights[4] = 1;
  Tensor x = random_tensor(1, 8, 8, 500, rng);
  PackedTensor in = pack_input(*ctx, direct_layout(*ctx, 1, 8, 8, 1), x, sk, prng);
  EXPECT_EQ(unpack(*ctx, conv_proposed(*ctx, in, layer), sk), x);
}

TEST_F(ConvFixture, MatchesOracleSmall) {
  ConvLayerSpec layer = random_layer(8, 8, 4, 4, 3, 127, rng);
  Tensor x = random_tensor(4, 8, 8, 100, rng);
  PackedTensor in = pack_input(*ctx, direct_layout(*ctx, 4, 8, 8, 1), x, sk, prng);
  EXPECT_EQ(unpack(*ctx, conv_proposed(*ctx, in, layer), sk),
            centered(*ctx, conv_oracle(x, layer)));
}

TEST_F(ConvFixture, MatchesOracleAcrossGeometries) {
  for (auto [h, c, k] : std::vector<std::tuple<u32, u32, u32>>{
           {4, 1, 1}, {4, 16, 3}, {8, 4, 5}, {16, 4, 3}, {32, 2, 3}, {48, 2, 3}, {64, 1, 5}}) {
    ConvLayerSpec layer = random_layer(h, h, c, c, k, 127, rng);
    layer.bias.resize(c);
    for (auto& b : layer.bias) b = static_cast<i64>(rng() % 2001) - 1000;
    Tensor x = random_tensor(c, h, h, 60, rng);
    PackedTensor in = pack_input(*ctx, direct_layout(*ctx, c, h, h, k / 2), x, sk, prng);
    PackedTensor lazy = conv_proposed(*ctx, in, layer, {.lazy = true, .threads = 1});
    EXPECT_EQ(unpack(*ctx, lazy, sk), centered(*ctx, conv_oracle(x, layer)))
        << h << " " << c << " " << k;
    PackedTensor eager = conv_proposed(*ctx, in, layer, {.lazy = false, .threads = 1});
    PackedTensor threaded = conv_proposed(*ctx, in, layer, {.lazy = true, .threads = 4});
    ASSERT_EQ(eager.cts.size(), lazy.cts.size());
    for (std::size_t i = 0; i < lazy.cts.size(); ++i) {
      EXPECT_EQ(eager.cts[i].c0, lazy.cts[i].c0);
      EXPECT_EQ(eager.cts[i].c1, lazy.cts[i].c1);
      EXPECT_EQ(threaded.cts[i].c0, lazy.cts[i].c0);
      EXPECT_EQ(threaded.cts[i].c1, lazy.cts[i].c1);
    }
  }
}

TEST_F(ConvFixture, RejectsBadInputs) {
  ConvLayerSpec layer = random_layer(4, 4, 1, 1, 3, 1, rng);
  Tensor x = random_tensor(1, 4, 4, 1, rng);
  PackedTensor batch = pack_input(*ctx, batch_layout(*ctx, 1, 4, 4, 1), x, sk, prng);
  EXPECT_THROW(conv_proposed(*ctx, batch, layer), UsageError);
  layer.weights[0] = 300;
  PackedTensor in = pack_input(*ctx, direct_layout(*ctx, 1, 4, 4, 1), x, sk, prng);
  EXPECT_THROW(conv_proposed(*ctx, in, layer), ParameterError);
  ConvLayerSpec even = random_layer(4, 4, 1, 1, 2, 1, rng);
  EXPECT_THROW(even.validate(), ParameterError);
}

TEST_F(ConvFixture, ConventionalMatchesOracle) {
  for (auto [h, c, k] : std::vector<std::tuple<u32, u32, u32>>{
           {4, 3, 3}, {4, 40, 3}, {8, 2, 5}, {24, 2, 3}}) {
    ConvLayerSpec layer = random_layer(h, h, c, 2, k, 127, rng);
    layer.bias = {5, -7};
    Tensor x = random_tensor(c, h, h, 60, rng);
    Layout l = batch_layout(*ctx, c, h, h, k / 2);
    ConventionalPlan plan = plan_conventional(*ctx, l, layer);
    auto steps = plan.rotation_steps();
    SwitchingKeySet keys = gen_switching_keys(*ctx, sk, steps, prng, {.row_swap = true});
    PackedTensor in = pack_input(*ctx, l, x, sk, prng);
    PackedTensor out = conv_conventional(*ctx, in, plan, keys, 2);
    EXPECT_EQ(unpack(*ctx, out, sk), centered(*ctx, conv_oracle(x, layer)))
        << h << " " << c << " " << k;
  }
}

TEST_F(ConvFixture, ConventionalIdentityAndMissingKeys) {
  ConvLayerSpec layer = random_layer(4, 4, 1, 1, 3, 0, rng);
  layer.weights[4] = 1;
  Tensor x = random_tensor(1, 4, 4, 300, rng);
  Layout l = batch_layout(*ctx, 1, 4, 4, 1);
  ConventionalPlan plan = plan_conventional(*ctx, l, layer);
  PackedTensor in = pack_input(*ctx, l, x, sk, prng);
  SwitchingKeySet none;
  EXPECT_EQ(unpack(*ctx, conv_conventional(*ctx, in, plan, none), sk), x);
  ConvLayerSpec full = random_layer(4, 4, 1, 1, 3, 3, rng);
  ConventionalPlan plan2 = plan_conventional(*ctx, l, full);
  EXPECT_THROW(conv_conventional(*ctx, in, plan2, none), KeyError);
}

TEST_F(ConvFixture, ProposedAddsLessNoise) {
  ConvLayerSpec layer = random_layer(16, 16, 16, 2, 3, 127, rng);
  Tensor x = random_tensor(16, 16, 16, 60, rng);
  Layout dl = direct_layout(*ctx, 16, 16, 16, 1);
  PackedTensor din = pack_input(*ctx, dl, x, sk, prng);
  int fresh = noise_budget(*ctx, din.cts[0], sk);
  PackedTensor dout = conv_proposed(*ctx, din, layer);
  int proposed = noise_budget(*ctx, dout.cts[0], sk);
  EXPECT_LE(fresh - proposed, 14);

  Layout bl = batch_layout(*ctx, 16, 16, 16, 1);
  ConventionalPlan plan = plan_conventional(*ctx, bl, layer);
  auto steps = plan.rotation_steps();
  SwitchingKeySet keys = gen_switching_keys(*ctx, sk, steps, prng, {.row_swap = true});
  PackedTensor bin = pack_input(*ctx, bl, x, sk, prng);
  PackedTensor bout = conv_conventional(*ctx, bin, plan, keys);
  int conventional = noise_budget(*ctx, bout.cts[0], sk);
  EXPECT_GT(proposed, conventional);
  EXPECT_GT(conventional, 0);
}

TEST_F(ConvFixture, AvgPool) {
  Tensor x = random_tensor(5, 8, 8, 200, rng);
  PackedTensor in = pack_input(*ctx, direct_layout(*ctx, 5, 8, 8, 0), x, sk, prng);
  PackedTensor pooled = avg_pool(*ctx, in, 2);
  EXPECT_EQ(unpack(*ctx, pooled, sk), avg_pool_oracle(x, 2));
  EXPECT_EQ(unpack(*ctx, avg_pool(*ctx, pooled, 2), sk), avg_pool_oracle(avg_pool_oracle(x, 2), 2));
  Tensor ones(1, 4, 4);
  std::fill(ones.data.begin(), ones.data.end(), 3);
  PackedTensor c = pack_input(*ctx, direct_layout(*ctx, 1, 4, 4, 0), ones, sk, prng);
  Tensor expect(1, 1, 1);
  expect.data[0] = 48;
  PackedTensor cp = avg_pool(*ctx, c, 4);
  EXPECT_EQ(unpack(*ctx, cp, sk), expect);
  int drop = noise_budget(*ctx, c.cts[0], sk) - noise_budget(*ctx, cp.cts[0], sk);
  EXPECT_LE(drop, 5);
  EXPECT_THROW(avg_pool(*ctx, in, 3), UsageError);
}

TEST_F(ConvFixture, AvgPoolOnBandedConvOutput) {
  ConvLayerSpec layer = random_layer(64, 64, 1, 2, 3, 5, rng);
  Tensor x = random_tensor(1, 64, 64, 50, rng);
  PackedTensor in = pack_input(*ctx, direct_layout(*ctx, 1, 64, 64, 1, 4), x, sk, prng);
  PackedTensor out = avg_pool(*ctx, conv_proposed(*ctx, in, layer), 4);
  EXPECT_EQ(unpack(*ctx, out, sk), centered(*ctx, avg_pool_oracle(conv_oracle(x, layer), 4)));
}

TEST_F(ConvFixture, ConvReadsPooledLayout) {
  // Pool input padded by pool * kernel pad keeps zeros around the pooled grid.
  for (auto [c, h] : std::vector<std::pair<u32, u32>>{{3, 16}, {2, 64}}) {
    Tensor x = random_tensor(c, h, h, 30, rng);
    ConvLayerSpec layer = random_layer(h / 2, h / 2, c, 4, 3, 20, rng);
    PackedTensor in = pack_input(*ctx, direct_layout(*ctx, c, h, h, 2, 2), x, sk, prng);
    PackedTensor pooled = avg_pool(*ctx, in, 2);
    EXPECT_EQ(pooled.layout.stride, 2u);
    Tensor want = centered(*ctx, conv_oracle(avg_pool_oracle(x, 2), layer));
    EXPECT_EQ(unpack(*ctx, conv_proposed(*ctx, pooled, layer), sk), want);
    EXPECT_EQ(unpack(*ctx, conv_proposed(*ctx, pooled, layer, {.lazy = false}), sk), want);
  }
  Tensor x = random_tensor(1, 8, 8, 30, rng);
  PackedTensor thin = pack_input(*ctx, direct_layout(*ctx, 1, 8, 8, 1), x, sk, prng);
  EXPECT_THROW(conv_proposed(*ctx, avg_pool(*ctx, thin, 2), random_layer(4, 4, 1, 1, 3, 5, rng)),
               UsageError);
}

TEST_F(ConvFixture, FullyConnected) {
  Tensor x = random_tensor(2, 4, 4, 100, rng);
  FcSpec fc;
  fc.in_features = 32;
  fc.out_features = 16;
  fc.weights.resize(32 * 16);
  for (auto& w : fc.weights) w = static_cast<i32>(rng() % 255) - 127;
  fc.bias.resize(16, 3);
  PackedTensor in = pack_input(*ctx, direct_layout(*ctx, 2, 4, 4, 1), x, sk, prng);
  auto out = fully_connected(*ctx, in, fc, 2);
  auto expect = fc_oracle(x, fc);
  ASSERT_EQ(out.size(), 16u);
  for (u32 o = 0; o < 16; ++o) {
    EXPECT_EQ(decode_direct(*ctx, decrypt(*ctx, out[o], sk))[0],
              ctx->p_ring().mod().from_signed(expect[o]));
  }
  FcSpec ident;
  ident.in_features = ident.out_features = 32;
  ident.weights.assign(32 * 32, 0);
  for (u32 i = 0; i < 32; ++i) ident.weights[i * 32 + i] = 1;
  auto id = fully_connected(*ctx, in, ident);
  for (u32 i = 0; i < 32; ++i) {
    EXPECT_EQ(to_signed(*ctx, decode_direct(*ctx, decrypt(*ctx, id[i], sk)))[0], x.data[i]);
  }
  std::fill(ident.weights.begin(), ident.weights.end(), 0);
  for (const auto& ct : fully_connected(*ctx, in, ident)) {
    EXPECT_EQ(decode_direct(*ctx, decrypt(*ctx, ct, sk))[0], 0u);
  }
  fc.in_features = 31;
  EXPECT_THROW(fully_connected(*ctx, in, fc), ParameterError);
}

TEST_F(ConvFixture, StorageAccounting) {
  ConvLayerSpec layer = random_layer(4, 4, 16, 16, 3, 127, rng);
  Layout bl = batch_layout(*ctx, 16, 4, 4, 1);
  ConventionalCost cost = conventional_cost(*ctx, bl, layer);
  ConventionalPlan plan = plan_conventional(*ctx, bl, layer);
  EXPECT_EQ(cost.plaintexts, plan.plaintext_uses);
  EXPECT_EQ(cost.steps, plan.rotation_steps());
  EXPECT_EQ(plan.plaintext_bytes(*ctx), plan.plaintext_uses * 2048 * 8);
  // 16 outputs x 1 ciphertext x 9 taps.
  EXPECT_EQ(plan.plaintext_uses, 144u);
}

}  // namespace
}  // namespace flash
