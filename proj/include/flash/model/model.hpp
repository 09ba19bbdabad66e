#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flash/act2pc/protocol.hpp"
#include "flash/conv/layout.hpp"
#include "flash/conv/linear.hpp"

namespace flash {

enum class LayerKind : u8 { kConv, kAct, kAvgPool, kFc, kResidual };

const char* layer_kind_name(LayerKind kind);

struct LayerDesc {
  LayerKind kind = LayerKind::kConv;
  ConvLayerSpec conv;      // kConv
  FcSpec fc;               // kFc
  bool rescale = false;    // kAct: truncate back to the codec scale
  u32 pool = 0;            // kAvgPool: window size; sums the window
  u32 from = 0;            // kResidual: index of the layer whose output is added
};

// Shape and fixed-point scale after a layer.
struct Shape {
  u32 channels = 0, height = 0, width = 0;
  int scale = 0;
  bool flat = false;  // after a fully connected layer

  u64 size() const { return static_cast<u64>(channels) * height * width; }
};

struct Model {
  std::string name;
  Shape input;
  FixedPointCodec codec;
  std::vector<LayerDesc> layers;

  // Fills `shapes` and checks the graph and fixed-point budget. Errors name
  // the offending layer.
  void validate();
  std::vector<Shape> shapes;  // output of each layer, after validate()
  const Shape& output() const { return shapes.empty() ? input : shapes.back(); }
};

// JSON manifest plus a binary weight blob next to it; see README.
Model load_model(const std::string& manifest_path, u64 p);
Model parse_model(const std::string& manifest_json, std::span<const u8> blob, u64 p);
void save_model(const Model& model, const std::string& manifest_path);
std::string model_manifest_json(const Model& model, const std::string& blob_name);
std::vector<u8> model_weight_blob(const Model& model);

// General degree-2 activation alpha x^2 + beta x + gamma; the secure path
// is alpha = beta = 1, gamma = 0.
struct ActPoly {
  i64 alpha = 1, beta = 1, gamma = 0;
};

struct OracleResult {
  std::vector<Tensor> trace;  // output of every layer
  std::vector<i64> logits;
  int scale = 0;
};

// Exact integer forward pass. Activations at scale s produce
// alpha a^2 + beta a 2^s + gamma 4^s at scale 2s; rescaling divides by
// 2^(2s - f) rounding half up. The secure truncation returns the floor or
// one more (stochastic rounding), so it lands within one unit of this.
// OverflowError names the layer whose values leave the window.
OracleResult oracle_infer(const Model& model, const Tensor& input, ActPoly act = {});
// Layer i alone, on `in`, with earlier outputs in `trace` for residuals.
Tensor oracle_layer(const Model& model, std::size_t i, const Tensor& in,
                    const std::vector<Tensor>& trace, ActPoly act = {});

// Checks a secure run layer by layer against the oracle applied to the
// run's own previous outputs: linear layers and unrescaled activations must
// match exactly, rescaled activations must give floor(z / 2^k) or one more.
struct ReplayReport {
  bool ok = true;
  std::size_t truncated_values = 0;
  std::size_t rounded_up = 0;
  std::string first_mismatch;
};
ReplayReport replay_check(const Model& model, const Tensor& input,
                          const std::vector<Tensor>& observed);

// Per-logit interval containing every output the secure pipeline can give,
// allowing each truncated value to come out one above its floor.
struct LogitBounds {
  std::vector<i64> lo, hi;
};
LogitBounds oracle_bounds(const Model& model, const Tensor& input);

Tensor quantize_input(const std::vector<double>& values, const Shape& shape, int frac_bits);

// Batch norm and the trainable output scale folded into a conv layer:
//   w' = w g s / sd, b' = (b - mu) g s / sd + beta s, sd = sqrt(var + eps).
struct BatchNorm {
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;
};

struct FoldedConv {
  std::vector<double> weights;  // [out][in][ky][kx]
  std::vector<double> bias;
  std::vector<u32> degenerate;  // channels whose scale is zero
};

FoldedConv fold_bn_scale(const std::vector<double>& weights, const std::vector<double>& bias,
                         const BatchNorm& bn, const std::vector<double>& scale,
                         u32 out_channels);
// Rounds to weight_frac_bits fraction bits; OverflowError past 8 bits.
std::vector<i32> quantize_weights(const std::vector<double>& w, int weight_frac_bits);
std::vector<i64> quantize_bias(const std::vector<double>& b, int scale);

}  // namespace flash
