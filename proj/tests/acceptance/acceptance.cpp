// One PASS/FAIL line per acceptance criterion.
//   flash_acceptance --criterion N    (N in 1..10; omit to run all)

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "flash/bench/bench.hpp"
#include "flash/bfv/serialize.hpp"
#include "flash/conv/conventional.hpp"
#include "flash/conv/proposed.hpp"
#include "flash/engine/engine.hpp"
#include "flash/ring/params.hpp"
#include "test_util.hpp"

#ifndef FLASH_SOURCE_DIR
#define FLASH_SOURCE_DIR "."
#endif

using namespace flash;
using flash::testing::centered;
using flash::testing::drot_oracle;
using flash::testing::random_layer;
using flash::testing::random_message;
using flash::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [fail]");
  }
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

ContextPtr context() { return Context::create(default_params()); }

// 1. decrypt(DRot(encrypt(m), s)) equals the sign-flipping left rotation.
// 2. DRot leaves the noise budget unchanged.
Outcome drot_trials(bool semantics) {
  ContextPtr ctx = context();
  Prng prng = Prng::from_u64(101);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng(102);
  const i64 n = static_cast<i64>(ctx->n());
  int exact = 0, same_budget = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    MessageVec m = random_message(*ctx, rng);
    const i64 step = static_cast<i64>(rng() % static_cast<u64>(4 * n)) - 2 * n;
    Ciphertext ct = encrypt_private(*ctx, encode_direct(*ctx, m), sk, prng);
    Ciphertext r = drot(*ctx, ct, step);
    if (semantics) {
      exact += decode_direct(*ctx, decrypt(*ctx, r, sk)) == drot_oracle(*ctx, m, step);
    } else {
      same_budget += noise_budget(*ctx, ct, sk) == noise_budget(*ctx, r, sk);
    }
  }
  Outcome o;
  if (semantics) {
    o.check(exact == trials, std::to_string(exact) + "/" + std::to_string(trials) +
                                 " rotations exact at n=" + std::to_string(n));
  } else {
    o.check(same_budget == trials,
            std::to_string(same_budget) + "/" + std::to_string(trials) + " budgets unchanged");
  }
  return o;
}

// 3. Fresh private-key budget 37 +- 3 bits.
Outcome fresh_budget() {
  ContextPtr ctx = context();
  Prng prng = Prng::from_u64(103);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng(104);
  std::vector<int> b;
  for (int t = 0; t < 500; ++t) {
    Ciphertext ct = encrypt_private(*ctx, encode_direct(*ctx, random_message(*ctx, rng)), sk, prng);
    b.push_back(noise_budget(*ctx, ct, sk));
  }
  std::sort(b.begin(), b.end());
  Outcome o;
  o.check(b.front() >= 34 && b.back() <= 40,
          "500 encryptions: min " + std::to_string(b.front()) + " median " +
              std::to_string(b[b.size() / 2]) + " max " + std::to_string(b.back()) +
              " (want 37 +- 3)");
  return o;
}

// 4. Both convolutions bit-exact against the integer oracle.
Outcome conv_oracle_suite() {
  ContextPtr ctx = context();
  Prng prng = Prng::from_u64(105);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng(106);
  struct G {
    u32 h, c, k;
  };
  std::vector<G> suite;
  for (u32 h : {4u, 8u, 16u, 32u}) {
    for (u32 c : {1u, 4u, 16u, 64u}) {
      for (u32 k : {1u, 3u, 5u}) suite.push_back({h, c, k});
    }
  }
  suite.push_back({64, 4, 3});
  suite.push_back({64, 16, 5});
  int proposed = 0, conventional = 0;
  std::string first_bad;
  for (const G& g : suite) {
    const u32 co = std::max(1u, g.c / 2) + 1;
    ConvLayerSpec layer = random_layer(g.h, g.h, g.c, co, g.k, 31, rng);
    layer.bias.resize(co);
    for (i64& b : layer.bias) b = static_cast<i64>(rng() % 201) - 100;
    Tensor x = random_tensor(g.c, g.h, g.h, 64, rng);
    const Tensor want = centered(*ctx, conv_oracle(x, layer));
    const std::string label = "(" + std::to_string(g.h) + "^2," + std::to_string(g.c) + "," +
                              std::to_string(co) + "," + std::to_string(g.k) + ")";

    PackedTensor din = pack_input(*ctx, direct_layout(*ctx, g.c, g.h, g.h, layer.pad()), x, sk, prng);
    bool ok = unpack(*ctx, conv_proposed(*ctx, din, layer), sk) == want;
    proposed += ok;
    if (!ok && first_bad.empty()) first_bad = "proposed " + label;

    Layout bl = batch_layout(*ctx, g.c, g.h, g.h, layer.pad());
    ConventionalPlan plan = plan_conventional(*ctx, bl, layer);
    auto steps = plan.rotation_steps();
    SwitchingKeySet keys;
    if (!steps.empty() || plan.row_sum) {
      keys = gen_switching_keys(*ctx, sk, steps, prng, {.row_swap = plan.row_sum});
    }
    PackedTensor bin = pack_input(*ctx, bl, x, sk, prng);
    ok = unpack(*ctx, conv_conventional(*ctx, bin, plan, keys), sk) == want;
    conventional += ok;
    if (!ok && first_bad.empty()) first_bad = "conventional " + label;
  }
  Outcome o;
  const int total = static_cast<int>(suite.size());
  o.check(proposed == total, "proposed " + std::to_string(proposed) + "/" + std::to_string(total));
  o.check(conventional == total,
          "conventional " + std::to_string(conventional) + "/" + std::to_string(total));
  if (!first_bad.empty()) o.detail << "; first mismatch " << first_bad;
  return o;
}

const std::vector<ConvGeometry> kGeometryFamily = {
    {32, 16, 16, 3}, {16, 32, 32, 3}, {8, 64, 64, 3}, {64, 64, 64, 3}, {4, 64, 64, 3}};

// 5. Proposed conv drops at most 6 bits, and less than the conventional one.
Outcome conv_noise() {
  ContextPtr ctx = context();
  Prng prng = Prng::from_u64(107);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng(108);
  Outcome o;
  for (const ConvGeometry& g : kGeometryFamily) {
    ConvBench b = bench_conv(*ctx, sk, prng, g, {.reps = 1, .threads = 1}, rng);
    const int drop = b.fresh_budget - b.proposed_budget;
    const int conv_drop = b.fresh_budget - b.conventional_budget;
    o.check(drop <= 6 && drop < conv_drop && b.proposed_exact && b.conventional_exact,
            g.label() + " " + std::to_string(b.fresh_budget) + "->" +
                std::to_string(b.proposed_budget) + " vs " +
                std::to_string(b.conventional_budget));
  }
  return o;
}

// 6. Speed ratios.
Outcome speedups() {
  ContextPtr ctx = context();
  Prng prng = Prng::from_u64(109);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng(110);
  Outcome o;
  ConvBenchOptions opt{.reps = 5, .threads = 8};
  ConvBench big = bench_conv(*ctx, sk, prng, {64, 64, 64, 3}, opt, rng);
  ConvBench small = bench_conv(*ctx, sk, prng, {4, 64, 64, 3}, opt, rng);
  o.check(big.speedup() >= 10, "(64^2,64,64,3) " + fmt(big.speedup()) + "x >= 10");
  o.check(small.speedup() >= 4, "(4^2,64,64,3) " + fmt(small.speedup()) + "x >= 4");
  o.check(big.lazy_speedup() >= 1.5, "lazy " + fmt(big.lazy_speedup()) + "x >= 1.5");
  o.check(big.thread_speedup() >= 1.5,
          "8 threads " + fmt(big.thread_speedup()) + "x >= 1.5 on " +
              std::to_string(std::thread::hardware_concurrency()) + " cpu");
  OpBench ops = bench_ops(*ctx, sk, prng, 200, {ctx->params().decomp_log});
  const double ratio = ops.hrot.begin()->second / ops.drot;
  o.check(ratio >= 50, "HRot/DRot " + fmt(ratio, 1) + "x >= 50");
  return o;
}

// 7. Activation protocol over an in-process channel.
Outcome activation_protocol() {
  ContextPtr ctx = context();
  Prng sprng = Prng::from_u64(111);
  Prng cprng = Prng::from_u64(112);
  SecretKey sk = keygen(*ctx, cprng);
  std::mt19937_64 rng(113);
  const int runs = 1000;
  const int scale = 6;
  const u32 layer = 1;
  auto [a, b] = channel_pair();
  Endpoint server(std::move(a)), client(std::move(b));
  server.set_phase(Phase::kOffline);
  client.set_phase(Phase::kOffline);
  auto sessions = offline_prepare(ctx, runs, layer, SlotMap::identity(1, ctx->n()), scale, sprng);
  ZeroPool pool = offline_prepare_client(*ctx, sk, runs, cprng);
  server.set_phase(Phase::kOnline);
  client.set_phase(Phase::kOnline);

  // Harness side: the values a and the server's [a], built from fresh
  // encryptions summed so they are not in seed form, like conv outputs.
  const Modulus& pm = ctx->p_ring().mod();
  std::vector<std::vector<i64>> values(runs);
  std::vector<Ciphertext> inputs(runs);
  for (int t = 0; t < runs; ++t) {
    values[t].resize(ctx->n());
    for (i64& v : values[t]) v = static_cast<i64>(rng() % 128) - 64;
    MessageVec m(ctx->n());
    for (u64 i = 0; i < ctx->n(); ++i) m[i] = pm.from_signed(values[t][i]);
    inputs[t] = hadd(*ctx, encrypt_private(*ctx, encode_direct(*ctx, m), sk, cprng),
                     encrypt_private(*ctx, encode_direct(*ctx, MessageVec(ctx->n(), 0)), sk, cprng));
  }

  std::vector<Ciphertext> outputs(runs);
  std::exception_ptr failure;
  std::thread st([&] {
    try {
      for (int t = 0; t < runs; ++t) {
        ActivationSession& s = sessions[t];
        send_ciphertexts(server, FrameKind::kActRound, layer, 0, s.server_round1({inputs[t]}), true);
        auto sq = recv_ciphertexts(server, *ctx, FrameKind::kActRound, layer, 1, 1);
        auto mb = recv_ciphertexts(server, *ctx, FrameKind::kActRound, layer, 2, 1);
        send_ciphertexts(server, FrameKind::kActRound, layer, 3, s.server_round2(mb), true);
        auto back = recv_ciphertexts(server, *ctx, FrameKind::kActRound, layer, 4, 1);
        outputs[t] = s.server_finalize(sq, back)[0];
      }
    } catch (...) {
      failure = std::current_exception();
      server.close();
    }
  });
  const SlotMap id = SlotMap::identity(1, ctx->n());
  try {
    for (int t = 0; t < runs; ++t) {
      auto masked = recv_ciphertexts(client, *ctx, FrameKind::kActRound, layer, 0, 1);
      ClientRound1 r1 = client_round1(*ctx, masked, sk, pool, id, scale);
      send_ciphertexts(client, FrameKind::kActRound, layer, 1, r1.square, true);
      send_ciphertexts(client, FrameKind::kActRound, layer, 2, r1.masked_batch, true);
      auto cross = recv_ciphertexts(client, *ctx, FrameKind::kActRound, layer, 3, 1);
      send_ciphertexts(client, FrameKind::kActRound, layer, 4, client_round2(*ctx, cross, sk, pool),
                       true);
    }
  } catch (...) {
    client.close();
    st.join();
    throw;
  }
  st.join();
  if (failure) std::rethrow_exception(failure);

  int exact = 0;
  for (int t = 0; t < runs; ++t) {
    MessageVec got = decode_direct(*ctx, decrypt(*ctx, outputs[t], sk));
    bool ok = true;
    for (u64 i = 0; i < ctx->n() && ok; ++i) {
      const i64 a = values[t][i];
      ok = got[i] == pm.from_signed(a * a + a * (i64{1} << scale));
    }
    exact += ok;
  }
  const TranscriptStats& stc = client.stats();
  const double per = static_cast<double>(stc.phase(Phase::kOnline).bytes()) /
                     (static_cast<double>(runs) * static_cast<double>(ctx->n())) / 1024.0;
  Outcome o;
  o.check(exact == runs, std::to_string(exact) + "/" + std::to_string(runs) +
                             " runs equal a^2 + a in Z_p");
  o.check(stc.phase(Phase::kOffline).bytes() == 0 && server.stats().phase(Phase::kOffline).bytes() == 0,
          "offline bytes " + std::to_string(stc.phase(Phase::kOffline).bytes()));
  o.check(per <= 0.06, "online " + fmt(per, 4) + " KB per activation <= 0.06");
  return o;
}

std::size_t argmax(const std::vector<i64>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// 8. Toy network over TCP loopback against the plaintext oracle.
Outcome toy_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  ContextPtr ctx = context();
  Model m = load_model(std::string(FLASH_SOURCE_DIR) + "/models/toy/model.json", ctx->p());
  Prng sprng = Prng::from_u64(114);
  Prng cprng = Prng::from_u64(115);
  SecretKey sk = keygen(*ctx, cprng);
  std::mt19937_64 rng(116);
  const int count = 100;
  std::vector<Tensor> inputs;
  for (int i = 0; i < count; ++i) {
    inputs.push_back(random_tensor(m.input.channels, m.input.height, m.input.width, 64, rng));
  }
  u32 convs = 0, acts = 0, pools = 0, fcs = 0;
  for (const LayerDesc& l : m.layers) {
    convs += l.kind == LayerKind::kConv;
    acts += l.kind == LayerKind::kAct;
    pools += l.kind == LayerKind::kAvgPool;
    fcs += l.kind == LayerKind::kFc;
  }

  TcpListener listener("127.0.0.1:0");
  std::vector<std::vector<Tensor>> seen(count, std::vector<Tensor>(m.layers.size()));
  std::exception_ptr failure;
  u64 max_frame = 0;
  std::thread st([&] {
    try {
      Endpoint ep(listener.accept());
      ServerRunner server(ctx, m, {}, sprng);
      int run = 0;
      // Test-only view of the intermediates, decrypted with the client key.
      server.set_observer([&](std::size_t layer, const PackedTensor& x) {
        seen[run][layer] = unpack(*ctx, x, sk);
      });
      exchange_handshake(ep, make_handshake(*ctx, m));
      for (run = 0; run < count; ++run) {
        server.offline();
        server.run(ep);
      }
      max_frame = ep.stats().max_frame_bytes();
    } catch (...) {
      failure = std::current_exception();
    }
  });
  std::vector<ClientResult> results;
  u64 conv_out_bytes = 0;
  try {
    Endpoint ep(tcp_connect("127.0.0.1:" + std::to_string(listener.port())));
    ClientRunner client(ctx, m, sk, {}, cprng);
    exchange_handshake(ep, make_handshake(*ctx, m));
    for (const Tensor& x : inputs) {
      client.offline();
      results.push_back(client.run(ep, x));
    }
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      if (m.layers[i].kind == LayerKind::kConv) {
        conv_out_bytes = std::max<u64>(conv_out_bytes, client.plan().outputs[i].ct_count *
                                                           (ciphertext_wire_size(ctx->n(), false) + 18));
      }
    }
    ep.close();
  } catch (...) {
    st.join();
    throw;
  }
  st.join();
  if (failure) std::rethrow_exception(failure);

  int replay_ok = 0, agree = 0, logits_ok = 0;
  i64 max_diff = 0;
  std::string first;
  for (int t = 0; t < count; ++t) {
    ReplayReport rep = replay_check(m, inputs[t], seen[t]);
    replay_ok += rep.ok;
    if (!rep.ok && first.empty()) first = rep.first_mismatch;
    logits_ok += results[t].logits == seen[t].back().data;
    OracleResult ref = oracle_infer(m, inputs[t]);
    agree += argmax(ref.logits) == argmax(results[t].logits);
    for (std::size_t i = 0; i < ref.logits.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(ref.logits[i] - results[t].logits[i]));
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.detail << convs << " conv, " << acts << " act, " << pools << " pool, " << fcs << " fc";
  o.check(replay_ok == count, std::to_string(replay_ok) + "/" + std::to_string(count) +
                                  " runs replay exactly, within 1 ulp per rescale" +
                                  (first.empty() ? "" : " (" + first + ")"));
  o.check(logits_ok == count, "returned logits match the replay " + std::to_string(logits_ok) +
                                  "/" + std::to_string(count));
  o.check(agree == count, "argmax agrees " + std::to_string(agree) + "/" + std::to_string(count) +
                              " (max logit gap to the rounded oracle " + std::to_string(max_diff) +
                              " ulp)");
  o.check(max_frame <= conv_out_bytes, "largest frame " + std::to_string(max_frame) +
                                           " B <= largest conv output " +
                                           std::to_string(conv_out_bytes) + " B");
  o.check(secs < 120, fmt(secs, 1) + " s < 120");
  return o;
}

// 9. Online encryption matches full encryption and costs < 0.15 of it.
Outcome online_encryption() {
  ContextPtr ctx = context();
  Prng prng = Prng::from_u64(117);
  SecretKey sk = keygen(*ctx, prng);
  std::mt19937_64 rng(118);
  int same = 0;
  const int trials = 200;
  ZeroPool pool = make_zero_pool(*ctx, sk, prng, trials);
  for (int t = 0; t < trials; ++t) {
    Plaintext pt = encode_direct(*ctx, random_message(*ctx, rng));
    ZeroCiphertext z = pool.take();
    same += decrypt(*ctx, encrypt_online(*ctx, pt, z), sk).poly ==
            decrypt(*ctx, encrypt_private(*ctx, pt, sk, prng), sk).poly;
  }
  Plaintext pt = encode_direct(*ctx, random_message(*ctx, rng));
  const double full = median_micros(300, 1, [&] {
    Ciphertext ct = encrypt_private(*ctx, pt, sk, prng);
    asm volatile("" : : "g"(&ct) : "memory");
  });
  std::vector<ZeroCiphertext> zeros = precompute_zero(*ctx, sk, prng, 300 * 4);
  std::size_t next = 0;
  const double online = median_micros(300, 4, [&] {
    Ciphertext ct = encrypt_online(*ctx, pt, zeros[next++]);
    asm volatile("" : : "g"(&ct) : "memory");
  });
  Outcome o;
  o.check(same == trials, std::to_string(same) + "/" + std::to_string(trials) + " decrypt identically");
  o.check(online / full < 0.15, "online " + fmt(online) + " us vs full " + fmt(full) + " us, ratio " +
                                    fmt(online / full, 3) + " < 0.15");
  return o;
}

// 10. Server storage on the toy network.
Outcome storage() {
  ContextPtr ctx = context();
  Model m = load_model(std::string(FLASH_SOURCE_DIR) + "/models/toy/model.json", ctx->p());
  StorageReport rep = storage_report(*ctx, m);
  Outcome o;
  o.check(rep.total.proposed_key_bytes == 0, "proposed switching keys " +
                                                 std::to_string(rep.total.proposed_key_bytes) + " B");
  o.check(rep.ratio() >= 100, "conventional plaintexts " +
                                  std::to_string(rep.total.conventional_plaintext_bytes) +
                                  " B vs raw weights " +
                                  std::to_string(rep.total.proposed_weight_bytes) + " B, " +
                                  fmt(rep.ratio(), 1) + "x >= 100");
  o.detail << "; conventional keys " << rep.total.conventional_key_bytes << " B";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "Run one criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> all = {
      {"DRot semantics", [] { return drot_trials(true); }},
      {"DRot noise invariance", [] { return drot_trials(false); }},
      {"fresh noise budget", fresh_budget},
      {"convolution oracle equivalence", conv_oracle_suite},
      {"noise after proposed convolution", conv_noise},
      {"speedup ratios", speedups},
      {"activation protocol", activation_protocol},
      {"end-to-end toy inference", toy_end_to_end},
      {"online encryption split", online_encryption},
      {"storage accounting", storage},
  };
  bool ok = true;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = all[i].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("error: ") + e.what());
    }
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  "
              << all[i].first << ": " << o.detail.str() << std::endl;
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
