#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "flash/bfv/ciphertext.hpp"
#include "flash/conv/layout.hpp"
#include "flash/model/model.hpp"

namespace flash {

// Median wall time of `reps` calls of fn, in microseconds. Each sample
// averages `batch` back-to-back calls.
template <class Fn>
double median_micros(int reps, int batch, Fn&& fn) {
  std::vector<double> samples;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    for (int b = 0; b < batch; ++b) fn();
    auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count() / batch);
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
  return samples[samples.size() / 2];
}

struct OpBench {
  double hadd = 0, pmult = 0, cmult = 0, drot = 0;
  std::map<int, double> hrot;  // by decomposition bit width T
  int reps = 0;

  // DRot < HAdd < PMult < HRot at the context's T.
  bool ordering_ok(int decomp_log) const;
  void write_csv(std::ostream& os) const;
};

OpBench bench_ops(const Context& ctx, const SecretKey& sk, Prng& prng, int reps,
                  const std::vector<int>& decomp_logs = {8, 16, 30});

struct ConvGeometry {
  u32 size = 0;  // H = W
  u32 in_channels = 0, out_channels = 0, kernel = 3;
  std::string label() const;
};

struct ConvBenchOptions {
  int reps = 3;
  int threads = 8;
  int weight_frac_bits = 4;  // He-normal weights quantized to this many bits
  i64 input_bound = 64;
  bool conventional = true;
};

struct ConvBench {
  ConvGeometry geometry;
  double conventional_ms = 0;
  double eager_ms = 0;        // proposed, one reduction per operation
  double lazy_ms = 0;         // proposed, lazy reduction
  double threaded_ms = 0;     // proposed, lazy, options.threads workers
  int threads = 1;
  int fresh_budget = 0;
  int proposed_budget = 0;
  int conventional_budget = 0;
  bool proposed_exact = false;
  bool conventional_exact = false;
  u64 key_bytes = 0;          // conventional switching keys
  u64 plaintext_bytes = 0;    // conventional weight plaintexts, one per use
  u64 weight_bytes = 0;       // proposed: i8 weights and i32 biases

  double speedup() const { return conventional_ms / lazy_ms; }
  double lazy_speedup() const { return eager_ms / lazy_ms; }
  double thread_speedup() const { return lazy_ms / threaded_ms; }
};

ConvLayerSpec he_normal_layer(const ConvGeometry& g, int weight_frac_bits,
                              std::mt19937_64& rng);

ConvBench bench_conv(const Context& ctx, const SecretKey& sk, Prng& prng,
                     const ConvGeometry& g, const ConvBenchOptions& options,
                     std::mt19937_64& rng);

void write_conv_csv(std::ostream& os, const std::vector<ConvBench>& rows);

// Server-side storage for the conv layers of a model under both methods.
struct StorageRow {
  std::string layer;
  u64 proposed_key_bytes = 0;
  u64 proposed_weight_bytes = 0;
  u64 conventional_key_bytes = 0;
  u64 conventional_plaintext_bytes = 0;
  std::size_t rotation_keys = 0;
};

struct StorageReport {
  std::vector<StorageRow> rows;
  StorageRow total;
  double ratio() const;  // conventional plaintext bytes over proposed weight bytes
  void write_csv(std::ostream& os) const;
};

StorageReport storage_report(const Context& ctx, const Model& model);

}  // namespace flash
