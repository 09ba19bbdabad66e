#include "flash/bench/bench.hpp"

#include <cmath>

#include "flash/bfv/evaluator.hpp"
#include "flash/conv/conventional.hpp"
#include "flash/conv/proposed.hpp"

namespace flash {

namespace {

MessageVec random_message(const Context& ctx, Prng& prng) {
  MessageVec m(ctx.n());
  for (u64& v : m) v = prng.uniform(ctx.p());
  return m;
}

template <class T>
void keep(const T& v) {
  asm volatile("" : : "g"(&v) : "memory");
}

int min_budget(const Context& ctx, const PackedTensor& x, const SecretKey& sk) {
  int best = 1 << 20;
  for (const Ciphertext& ct : x.cts) best = std::min(best, noise_budget(ctx, ct, sk));
  return best;
}

}  // namespace

bool OpBench::ordering_ok(int decomp_log) const {
  auto it = hrot.find(decomp_log);
  return it != hrot.end() && drot < hadd && hadd < pmult && pmult < it->second;
}

void OpBench::write_csv(std::ostream& os) const {
  os << "op,decomp_log,micros\n";
  os << "HAdd,," << hadd << "\nPMult,," << pmult << "\nCMult,," << cmult << "\nDRot,," << drot
     << "\n";
  for (const auto& [t, us] : hrot) os << "HRot," << t << "," << us << "\n";
}

OpBench bench_ops(const Context& ctx, const SecretKey& sk, Prng& prng, int reps,
                  const std::vector<int>& decomp_logs) {
  OpBench b;
  b.reps = reps;
  constexpr int kBatch = 16;
  // Batch-encoded operands live in the evaluation domain, direct ones in the
  // coefficient domain, as each is used.
  Ciphertext batch = to_eval(ctx, encrypt_private(ctx, encode_batch(ctx, random_message(ctx, prng)), sk, prng));
  Ciphertext other = to_eval(ctx, encrypt_private(ctx, encode_batch(ctx, random_message(ctx, prng)), sk, prng));
  Ciphertext direct = encrypt_private(ctx, encode_direct(ctx, random_message(ctx, prng)), sk, prng);
  PlaintextEval pt = prepare_pmult(ctx, encode_batch(ctx, random_message(ctx, prng)));

  b.hadd = median_micros(reps, kBatch, [&] { keep(hadd(ctx, batch, other)); });
  b.pmult = median_micros(reps, kBatch, [&] { keep(pmult(ctx, batch, pt)); });
  b.cmult = median_micros(reps, kBatch, [&] { keep(cmult(ctx, direct, 77)); });
  b.drot = median_micros(reps, kBatch, [&] { keep(drot(ctx, direct, 5)); });
  const std::vector<i64> steps{1};
  for (int t : decomp_logs) {
    SwitchingKeySet keys = gen_switching_keys(ctx, sk, steps, prng, {.decomp_log = t});
    b.hrot[t] = median_micros(reps, 1, [&] { keep(hrot(ctx, batch, 1, keys)); });
  }
  return b;
}

std::string ConvGeometry::label() const {
  return "(" + std::to_string(size) + "^2," + std::to_string(in_channels) + "," +
         std::to_string(out_channels) + "," + std::to_string(kernel) + ")";
}

ConvLayerSpec he_normal_layer(const ConvGeometry& g, int weight_frac_bits,
                              std::mt19937_64& rng) {
  ConvLayerSpec l;
  l.height = l.width = g.size;
  l.kernel = g.kernel;
  l.in_channels = g.in_channels;
  l.out_channels = g.out_channels;
  l.weight_scale = weight_frac_bits;
  std::normal_distribution<double> dist(
      0.0, std::sqrt(2.0 / (static_cast<double>(g.kernel * g.kernel) * g.in_channels)));
  const double scale = std::ldexp(1.0, weight_frac_bits);
  l.weights.resize(static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel);
  for (i32& w : l.weights) {
    w = static_cast<i32>(std::clamp(std::lround(dist(rng) * scale), -127L, 127L));
  }
  return l;
}

ConvBench bench_conv(const Context& ctx, const SecretKey& sk, Prng& prng,
                     const ConvGeometry& g, const ConvBenchOptions& options,
                     std::mt19937_64& rng) {
  ConvBench r;
  r.geometry = g;
  r.threads = options.threads;
  ConvLayerSpec layer = he_normal_layer(g, options.weight_frac_bits, rng);
  Tensor x(g.in_channels, g.size, g.size);
  for (i64& v : x.data) {
    v = static_cast<i64>(rng() % (2 * options.input_bound + 1)) - options.input_bound;
  }
  const Tensor want = conv_oracle(x, layer);
  const Modulus& pm = ctx.p_ring().mod();
  auto matches = [&](const Tensor& got) {
    if (got.data.size() != want.data.size()) return false;
    for (std::size_t i = 0; i < got.data.size(); ++i) {
      if (got.data[i] != pm.to_signed(pm.from_signed(want.data[i]))) return false;
    }
    return true;
  };

  PackedTensor din = pack_input(ctx, direct_layout(ctx, g.in_channels, g.size, g.size, layer.pad()),
                                x, sk, prng);
  r.fresh_budget = min_budget(ctx, din, sk);
  PackedTensor out;
  r.eager_ms = median_micros(options.reps, 1, [&] {
    out = conv_proposed(ctx, din, layer, {.lazy = false, .threads = 1});
  }) / 1e3;
  r.proposed_exact = matches(unpack(ctx, out, sk));
  r.lazy_ms = median_micros(options.reps, 1, [&] {
    out = conv_proposed(ctx, din, layer, {.lazy = true, .threads = 1});
  }) / 1e3;
  r.threaded_ms = median_micros(options.reps, 1, [&] {
    out = conv_proposed(ctx, din, layer, {.lazy = true, .threads = options.threads});
  }) / 1e3;
  r.proposed_exact = r.proposed_exact && matches(unpack(ctx, out, sk));
  r.proposed_budget = min_budget(ctx, out, sk);
  r.weight_bytes = layer.weights.size() + layer.bias.size() * sizeof(i32);

  Layout bl = batch_layout(ctx, g.in_channels, g.size, g.size, layer.pad());
  if (options.conventional) {
    ConventionalPlan plan = plan_conventional(ctx, bl, layer);
    auto steps = plan.rotation_steps();
    SwitchingKeySet keys;
    if (!steps.empty() || plan.row_sum) {
      keys = gen_switching_keys(ctx, sk, steps, prng, {.row_swap = plan.row_sum});
    }
    r.key_bytes = keys.storage_bytes();
    r.plaintext_bytes = plan.plaintext_bytes(ctx);
    PackedTensor bin = pack_input(ctx, bl, x, sk, prng);
    PackedTensor bout;
    r.conventional_ms = median_micros(options.reps, 1, [&] {
      bout = conv_conventional(ctx, bin, plan, keys, 1);
    }) / 1e3;
    r.conventional_exact = matches(unpack(ctx, bout, sk));
    r.conventional_budget = min_budget(ctx, bout, sk);
  } else {
    ConventionalCost cost = conventional_cost(ctx, bl, layer);
    r.key_bytes = switching_key_bytes(ctx, cost.steps.size(), ctx.params().decomp_log);
    r.plaintext_bytes = cost.plaintexts * ctx.n() * sizeof(u64);
  }
  return r;
}

void write_conv_csv(std::ostream& os, const std::vector<ConvBench>& rows) {
  os << "layer,conventional_ms,eager_ms,lazy_ms,threaded_ms,threads,speedup,lazy_speedup,"
        "thread_speedup,fresh_budget,proposed_budget,conventional_budget,proposed_exact,"
        "conventional_exact,key_bytes,plaintext_bytes,weight_bytes\n";
  for (const ConvBench& r : rows) {
    os << r.geometry.label() << "," << r.conventional_ms << "," << r.eager_ms << ","
       << r.lazy_ms << "," << r.threaded_ms << "," << r.threads << "," << r.speedup() << ","
       << r.lazy_speedup() << "," << r.thread_speedup() << "," << r.fresh_budget << ","
       << r.proposed_budget << "," << r.conventional_budget << "," << r.proposed_exact << ","
       << r.conventional_exact << "," << r.key_bytes << "," << r.plaintext_bytes << ","
       << r.weight_bytes << "\n";
  }
}

double StorageReport::ratio() const {
  return static_cast<double>(total.conventional_plaintext_bytes) /
         static_cast<double>(total.proposed_weight_bytes);
}

void StorageReport::write_csv(std::ostream& os) const {
  os << "layer,proposed_key_bytes,proposed_weight_bytes,conventional_key_bytes,"
        "conventional_plaintext_bytes,rotation_keys\n";
  auto row = [&](const StorageRow& r) {
    os << r.layer << "," << r.proposed_key_bytes << "," << r.proposed_weight_bytes << ","
       << r.conventional_key_bytes << "," << r.conventional_plaintext_bytes << ","
       << r.rotation_keys << "\n";
  };
  for (const StorageRow& r : rows) row(r);
  row(total);
}

StorageReport storage_report(const Context& ctx, const Model& model) {
  StorageReport rep;
  rep.total.layer = "total";
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerDesc& l = model.layers[i];
    if (l.kind != LayerKind::kConv) continue;
    const ConvLayerSpec& c = l.conv;
    Layout bl = batch_layout(ctx, c.in_channels, c.height, c.width, c.pad());
    ConventionalCost cost = conventional_cost(ctx, bl, c);
    StorageRow r;
    r.layer = "layer" + std::to_string(i);
    r.proposed_weight_bytes = c.weights.size() + c.bias.size() * sizeof(i32);
    r.rotation_keys = cost.steps.size();
    r.conventional_key_bytes =
        switching_key_bytes(ctx, cost.steps.size(), ctx.params().decomp_log);
    r.conventional_plaintext_bytes = cost.plaintexts * ctx.n() * sizeof(u64);
    rep.total.proposed_weight_bytes += r.proposed_weight_bytes;
    rep.total.conventional_key_bytes += r.conventional_key_bytes;
    rep.total.conventional_plaintext_bytes += r.conventional_plaintext_bytes;
    rep.total.rotation_keys += r.rotation_keys;
    rep.rows.push_back(r);
  }
  return rep;
}

}  // namespace flash
