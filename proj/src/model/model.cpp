#include "flash/model/model.hpp"

#include <fstream>
#include <sstream>

#include "flash/bfv/serialize.hpp"
#include "json.hpp"

namespace flash {

using json = nlohmann::json;

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kAct: return "act";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kFc: return "fc";
    case LayerKind::kResidual: return "residual";
  }
  return "unknown";
}

namespace {

std::string where(std::size_t i, LayerKind k) {
  return "layer " + std::to_string(i) + " (" + layer_kind_name(k) + "): ";
}

bool is_linear(LayerKind k) { return k != LayerKind::kAct; }

}  // namespace

void Model::validate() {
  if (input.channels == 0 || input.height == 0 || input.width == 0) {
    throw FormatError("model input has a zero dimension");
  }
  input.scale = codec.frac_bits;
  input.flat = false;
  shapes.clear();
  Shape cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerDesc& l = layers[i];
    const std::string at = where(i, l.kind);
    try {
      switch (l.kind) {
        case LayerKind::kConv: {
          if (cur.flat) throw FormatError("conv after a fully connected layer");
          ConvLayerSpec& c = l.conv;
          if (c.in_channels != cur.channels || c.height != cur.height ||
              c.width != cur.width) {
            throw FormatError("expects input " + std::to_string(c.in_channels) + "x" +
                              std::to_string(c.height) + "x" + std::to_string(c.width) +
                              ", previous layer gives " + std::to_string(cur.channels) +
                              "x" + std::to_string(cur.height) + "x" +
                              std::to_string(cur.width));
          }
          c.validate();
          cur.channels = c.out_channels;
          cur.scale += c.weight_scale;
          break;
        }
        case LayerKind::kAct:
          if (i == 0 || !is_linear(layers[i - 1].kind)) {
            throw FormatError("activation must follow a linear layer");
          }
          codec.check_activation(cur.scale, l.rescale);
          cur.scale = l.rescale ? codec.frac_bits : 2 * cur.scale;
          break;
        case LayerKind::kAvgPool:
          if (cur.flat) throw FormatError("pooling after a fully connected layer");
          if (l.pool == 0 || cur.height % l.pool != 0 || cur.width % l.pool != 0) {
            throw FormatError("window " + std::to_string(l.pool) + " does not divide " +
                              std::to_string(cur.height) + "x" + std::to_string(cur.width));
          }
          cur.height /= l.pool;
          cur.width /= l.pool;
          break;
        case LayerKind::kFc:
          if (l.fc.in_features != cur.size()) {
            throw FormatError("expects " + std::to_string(l.fc.in_features) +
                              " inputs, previous layer gives " + std::to_string(cur.size()));
          }
          l.fc.validate();
          cur = Shape{l.fc.out_features, 1, 1, cur.scale + l.fc.weight_scale, true};
          break;
        case LayerKind::kResidual: {
          if (l.from >= i) throw FormatError("residual source must precede its sink");
          const Shape& s = shapes[l.from];
          if (s.channels != cur.channels || s.height != cur.height || s.width != cur.width ||
              s.flat != cur.flat) {
            throw FormatError("residual source shape differs");
          }
          if (s.scale != cur.scale) {
            throw FormatError("residual scales differ (" + std::to_string(s.scale) +
                              " vs " + std::to_string(cur.scale) + ")");
          }
          break;
        }
      }
    } catch (const ParameterError& e) {
      throw ParameterError(at + e.what());
    } catch (const FormatError& e) {
      throw FormatError(at + e.what());
    } catch (const UsageError& e) {
      throw FormatError(at + e.what());
    }
    shapes.push_back(cur);
  }
}

namespace {

constexpr u32 kBlobVersion = 1;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put_i32(std::vector<u8>& out, i32 v) { put_u32(out, static_cast<u32>(v)); }

}  // namespace

Model parse_model(const std::string& manifest_json, std::span<const u8> blob, u64 p) {
  json j;
  try {
    j = json::parse(manifest_json);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  Model m;
  try {
    if (j.at("format").get<std::string>() != "flash-model") {
      throw FormatError("manifest: not a flash-model file");
    }
    if (j.at("version").get<int>() != 1) throw FormatError("manifest: unsupported version");
    m.name = j.value("name", "");
    auto in = j.at("input").get<std::vector<u32>>();
    if (in.size() != 3) throw FormatError("manifest: input must be [C, H, W]");
    m.input = Shape{in[0], in[1], in[2], 0, false};
    m.codec = FixedPointCodec{j.at("frac_bits").get<int>(), j.at("int_bits").get<int>(), p};
    for (const json& l : j.at("layers")) {
      LayerDesc d;
      std::string type = l.at("type").get<std::string>();
      if (type == "conv") {
        d.kind = LayerKind::kConv;
        d.conv.kernel = l.at("kernel").get<u32>();
        d.conv.out_channels = l.at("out_channels").get<u32>();
        d.conv.weight_scale = l.at("weight_frac_bits").get<int>();
      } else if (type == "act") {
        d.kind = LayerKind::kAct;
        d.rescale = l.value("rescale", false);
      } else if (type == "avgpool") {
        d.kind = LayerKind::kAvgPool;
        d.pool = l.at("size").get<u32>();
      } else if (type == "fc") {
        d.kind = LayerKind::kFc;
        d.fc.out_features = l.at("out_features").get<u32>();
        d.fc.weight_scale = l.at("weight_frac_bits").get<int>();
      } else if (type == "residual") {
        d.kind = LayerKind::kResidual;
        d.from = l.at("from").get<u32>();
      } else {
        throw FormatError("layer " + std::to_string(m.layers.size()) +
                          ": unknown type '" + type + "'");
      }
      m.layers.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }

  Reader r(blob);
  try {
    auto magic = r.bytes(4);
    if (std::string(magic.begin(), magic.end()) != "FLWB") {
      throw FormatError("weight blob: bad magic");
    }
    if (r.u32_() != kBlobVersion) throw FormatError("weight blob: unsupported version");
    u32 count = r.u32_();
    u32 weighted = 0;
    for (const LayerDesc& d : m.layers) {
      weighted += d.kind == LayerKind::kConv || d.kind == LayerKind::kFc;
    }
    if (count != weighted) {
      throw FormatError("weight blob holds " + std::to_string(count) +
                        " layers, manifest has " + std::to_string(weighted));
    }
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      LayerDesc& d = m.layers[i];
      if (d.kind != LayerKind::kConv && d.kind != LayerKind::kFc) continue;
      const std::string at = where(i, d.kind);
      if (r.u32_() != i) throw FormatError(at + "weight blob out of order");
      u8 type = r.u8_();
      if (type != (d.kind == LayerKind::kConv ? 0 : 1)) {
        throw FormatError(at + "weight blob layer type differs");
      }
      u32 h = r.u32_(), w = r.u32_(), k = r.u32_(), ci = r.u32_(), co = r.u32_();
      i32 wf = static_cast<i32>(r.u32_());
      bool has_bias = r.u8_() != 0;
      if (wf < 0 || wf > 16) throw FormatError(at + "bad weight scale");
      u64 count_w = static_cast<u64>(co) * ci * k * k;
      if (count_w > r.remaining()) throw FormatError(at + "weight blob truncated");
      std::vector<i32> weights(count_w);
      auto raw = r.bytes(count_w);
      for (u64 t = 0; t < count_w; ++t) weights[t] = static_cast<i8>(raw[t]);
      std::vector<i64> bias;
      if (has_bias) {
        for (u32 t = 0; t < co; ++t) bias.push_back(static_cast<i32>(r.u32_()));
      }
      const bool conv = d.kind == LayerKind::kConv;
      if ((conv && (d.conv.kernel != k || d.conv.out_channels != co ||
                    d.conv.weight_scale != wf)) ||
          (!conv && (d.fc.out_features != co || d.fc.weight_scale != wf))) {
        throw FormatError(at + "weight blob header disagrees with the manifest");
      }
      if (conv) {
        d.conv = ConvLayerSpec{h, w, k, ci, co, std::move(weights), std::move(bias), wf};
      } else {
        if (h != 1 || w != 1 || k != 1) throw FormatError(at + "fc header must be 1x1x1");
        d.fc = FcSpec{ci, co, std::move(weights), std::move(bias), wf};
      }
    }
    if (r.remaining() != 0) throw FormatError("weight blob: trailing bytes");
  } catch (const UsageError& e) {
    throw FormatError(std::string("weight blob truncated: ") + e.what());
  }
  m.validate();
  return m;
}

Model load_model(const std::string& manifest_path, u64 p) {
  std::string text = read_file(manifest_path);
  std::string blob_name;
  try {
    blob_name = json::parse(text).at("weights").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
  auto slash = manifest_path.rfind('/');
  std::string dir = slash == std::string::npos ? "" : manifest_path.substr(0, slash + 1);
  std::string blob = read_file(dir + blob_name);
  return parse_model(text, std::span<const u8>(reinterpret_cast<const u8*>(blob.data()),
                                               blob.size()),
                     p);
}

std::string model_manifest_json(const Model& model, const std::string& blob_name) {
  json j;
  j["format"] = "flash-model";
  j["version"] = 1;
  j["name"] = model.name;
  j["input"] = {model.input.channels, model.input.height, model.input.width};
  j["frac_bits"] = model.codec.frac_bits;
  j["int_bits"] = model.codec.int_bits;
  j["weights"] = blob_name;
  j["layers"] = json::array();
  for (const LayerDesc& d : model.layers) {
    json l;
    l["type"] = layer_kind_name(d.kind);
    switch (d.kind) {
      case LayerKind::kConv:
        l["kernel"] = d.conv.kernel;
        l["out_channels"] = d.conv.out_channels;
        l["weight_frac_bits"] = d.conv.weight_scale;
        break;
      case LayerKind::kAct: l["rescale"] = d.rescale; break;
      case LayerKind::kAvgPool: l["size"] = d.pool; break;
      case LayerKind::kFc:
        l["out_features"] = d.fc.out_features;
        l["weight_frac_bits"] = d.fc.weight_scale;
        break;
      case LayerKind::kResidual: l["from"] = d.from; break;
    }
    j["layers"].push_back(l);
  }
  return j.dump(2) + "\n";
}

std::vector<u8> model_weight_blob(const Model& model) {
  std::vector<u8> out = {'F', 'L', 'W', 'B'};
  put_u32(out, kBlobVersion);
  u32 count = 0;
  for (const LayerDesc& d : model.layers) {
    count += d.kind == LayerKind::kConv || d.kind == LayerKind::kFc;
  }
  put_u32(out, count);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerDesc& d = model.layers[i];
    if (d.kind != LayerKind::kConv && d.kind != LayerKind::kFc) continue;
    const bool conv = d.kind == LayerKind::kConv;
    const std::vector<i32>& w = conv ? d.conv.weights : d.fc.weights;
    const std::vector<i64>& b = conv ? d.conv.bias : d.fc.bias;
    put_u32(out, static_cast<u32>(i));
    put_u8(out, conv ? 0 : 1);
    put_u32(out, conv ? d.conv.height : 1);
    put_u32(out, conv ? d.conv.width : 1);
    put_u32(out, conv ? d.conv.kernel : 1);
    put_u32(out, conv ? d.conv.in_channels : d.fc.in_features);
    put_u32(out, conv ? d.conv.out_channels : d.fc.out_features);
    put_i32(out, conv ? d.conv.weight_scale : d.fc.weight_scale);
    put_u8(out, b.empty() ? 0 : 1);
    for (i32 v : w) {
      if (v < -128 || v > 127) throw OverflowError(where(i, d.kind) + "weight exceeds i8");
      put_u8(out, static_cast<u8>(static_cast<i8>(v)));
    }
    for (i64 v : b) {
      if (v < INT32_MIN || v > INT32_MAX) throw OverflowError(where(i, d.kind) + "bias exceeds i32");
      put_i32(out, static_cast<i32>(v));
    }
  }
  return out;
}

void save_model(const Model& model, const std::string& manifest_path) {
  auto slash = manifest_path.rfind('/');
  std::string dir = slash == std::string::npos ? "" : manifest_path.substr(0, slash + 1);
  std::string stem = manifest_path.substr(dir.size());
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  const std::string blob_name = stem + ".bin";
  std::ofstream(manifest_path) << model_manifest_json(model, blob_name);
  auto blob = model_weight_blob(model);
  std::ofstream(dir + blob_name, std::ios::binary)
      .write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

}  // namespace flash
