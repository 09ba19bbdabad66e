#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <exception>
#include <thread>

#include "flash/engine/engine.hpp"

namespace py = pybind11;
using namespace flash;

namespace {

// Shared immutable context behind a mutable handle, as pybind holders need.
struct ContextHandle {
  ContextPtr ptr;
};

Encoding parse_encoding(const std::string& name) {
  if (name == "batch") return Encoding::kBatch;
  if (name == "direct") return Encoding::kDirect;
  throw UsageError("encoding must be 'batch' or 'direct'");
}

// Holds the key and the client's randomness together.
struct Client {
  ContextPtr ctx;
  Prng prng;
  SecretKey sk;

  Client(const ContextHandle& c, u64 seed) : ctx(c.ptr), prng(Prng::from_u64(seed)), sk(keygen(*ctx, prng)) {}

  Ciphertext encrypt(const std::vector<i64>& values, const std::string& encoding) {
    if (values.size() > ctx->n()) throw UsageError("more values than slots");
    std::vector<i64> padded(values);
    padded.resize(ctx->n(), 0);
    Plaintext pt = encode(*ctx, to_message(*ctx, padded), parse_encoding(encoding));
    return encrypt_private(*ctx, pt, sk, prng);
  }
  std::vector<i64> decrypt(const Ciphertext& ct) const {
    MessageVec m = decode(*ctx, flash::decrypt(*ctx, ct, sk));
    return to_signed(*ctx, m);
  }
  int budget(const Ciphertext& ct) const { return noise_budget(*ctx, ct, sk); }
};

Tensor make_tensor(const Model& m, const std::vector<i64>& values) {
  Tensor t(m.input.channels, m.input.height, m.input.width);
  if (values.size() != t.data.size()) throw UsageError("input size does not match the model");
  t.data = values;
  return t;
}

// Both parties in this process over an in-memory channel.
py::dict run_inference(const ContextHandle& handle, const Model& model, const std::vector<i64>& input,
                       bool lazy, int threads, bool seed_compress, u64 seed) {
  ContextPtr ctx = handle.ptr;
  Tensor x = make_tensor(model, input);
  EngineOptions opt{lazy, threads, seed_compress};
  Prng cprng = Prng::from_u64(seed);
  Prng sprng = Prng::from_u64(seed ^ 0x5eed5eedULL);
  SecretKey sk = keygen(*ctx, cprng);
  auto [a, b] = channel_pair();
  Endpoint server_ep(std::move(a)), client_ep(std::move(b));
  ClientResult res;
  {
    py::gil_scoped_release release;
    std::exception_ptr err;
    std::thread st([&] {
      try {
        ServerRunner server(ctx, model, opt, sprng);
        exchange_handshake(server_ep, make_handshake(*ctx, model));
        server.offline();
        server.run(server_ep);
      } catch (...) {
        err = std::current_exception();
        server_ep.close();
      }
    });
    try {
      ClientRunner client(ctx, model, sk, opt, cprng);
      exchange_handshake(client_ep, make_handshake(*ctx, model));
      client.offline();
      res = client.run(client_ep, x);
    } catch (...) {
      client_ep.close();
      st.join();
      if (err) std::rethrow_exception(err);
      throw;
    }
    st.join();
    if (err) std::rethrow_exception(err);
  }
  const TranscriptStats& s = client_ep.stats();
  py::dict out;
  out["logits"] = res.logits;
  out["scale"] = res.scale;
  out["offline_bytes"] = s.phase(Phase::kOffline).bytes();
  out["online_bytes"] = s.phase(Phase::kOnline).bytes();
  out["max_frame_bytes"] = s.max_frame_bytes();
  return out;
}

}  // namespace

PYBIND11_MODULE(_flashpi, m) {
  m.doc() = "Hybrid HE/2PC private inference";

  py::register_exception<Error>(m, "FlashError");

  py::class_<RingParams>(m, "Params")
      .def(py::init<>())
      .def_readwrite("n", &RingParams::n)
      .def_readwrite("q", &RingParams::q)
      .def_readwrite("p", &RingParams::p)
      .def_readwrite("sigma", &RingParams::sigma)
      .def_readwrite("decomp_log", &RingParams::decomp_log)
      .def("validate", &RingParams::validate)
      .def("to_json", [](const RingParams& p) { return params_to_json(p); })
      .def_static("from_json", &params_from_json)
      .def_static("load", &load_params)
      .def("__repr__", [](const RingParams& p) {
        return "Params(n=" + std::to_string(p.n) + ", q=" + std::to_string(p.q) +
               ", p=" + std::to_string(p.p) + ", T=" + std::to_string(p.decomp_log) + ")";
      });
  m.def("default_params", &default_params);

  py::class_<ContextHandle>(m, "Context")
      .def_static("create", [](const RingParams& p) { return ContextHandle{Context::create(p)}; },
                  py::arg("params"))
      .def_property_readonly("n", [](const ContextHandle& c) { return c.ptr->n(); })
      .def_property_readonly("q", [](const ContextHandle& c) { return c.ptr->q(); })
      .def_property_readonly("p", [](const ContextHandle& c) { return c.ptr->p(); })
      .def_property_readonly("params", [](const ContextHandle& c) { return c.ptr->params(); });

  py::class_<Ciphertext>(m, "Ciphertext")
      .def_property_readonly("encoding", [](const Ciphertext& c) {
        return std::string(encoding_name(c.encoding));
      });

  py::class_<Client>(m, "Client")
      .def(py::init<const ContextHandle&, u64>(), py::arg("context"), py::arg("seed") = 1)
      .def("encrypt", &Client::encrypt, py::arg("values"), py::arg("encoding") = "direct")
      .def("decrypt", &Client::decrypt)
      .def("noise_budget", &Client::budget);

  m.def("drot", [](const ContextHandle& c, const Ciphertext& ct, i64 step) { return drot(*c.ptr, ct, step); },
        py::arg("context"), py::arg("ct"), py::arg("step"));

  py::class_<Model>(m, "Model")
      .def_readonly("name", &Model::name)
      .def_property_readonly("num_layers", [](const Model& md) { return md.layers.size(); })
      .def_property_readonly("input_shape", [](const Model& md) {
        return py::make_tuple(md.input.channels, md.input.height, md.input.width);
      })
      .def_property_readonly("input_scale", [](const Model& md) { return md.input.scale; })
      .def_property_readonly("layer_kinds", [](const Model& md) {
        std::vector<std::string> k;
        for (const auto& l : md.layers) k.emplace_back(layer_kind_name(l.kind));
        return k;
      });
  m.def("load_model", &load_model, py::arg("manifest"), py::arg("p"));

  m.def("oracle_infer", [](const Model& md, const std::vector<i64>& input) {
    return oracle_infer(md, make_tensor(md, input)).logits;
  }, py::arg("model"), py::arg("input"));

  m.def("quantize_input", [](const Model& md, const std::vector<double>& values) {
    return quantize_input(values, md.input, md.input.scale).data;
  }, py::arg("model"), py::arg("values"));

  m.def("run_inference", &run_inference, py::arg("context"), py::arg("model"), py::arg("input"),
        py::arg("lazy") = true, py::arg("threads") = 1, py::arg("seed_compress") = true,
        py::arg("seed") = 1);
}
