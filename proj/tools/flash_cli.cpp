#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "flash/bench/bench.hpp"
#include "flash/engine/engine.hpp"
#include "flash/ring/params.hpp"

using namespace flash;

namespace {

struct Common {
  std::string params_path;
  std::string report;
  int threads = 1;
  std::string lazy = "on";
  std::string seed_compress = "on";
  u64 seed = 1;

  RingParams params() const {
    return params_path.empty() ? default_params() : load_params(params_path);
  }
  EngineOptions engine() const {
    return {lazy == "on", threads, seed_compress == "on"};
  }
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--params", c.params_path, "Parameter file (JSON); built-in defaults if omitted");
  app.add_option("--report", c.report, "Write a CSV report to this file");
  app.add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--lazy", c.lazy, "Lazy reduction in convolutions")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--seed-compress", c.seed_compress, "Send fresh ciphertexts in seed form")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--seed", c.seed, "PRNG seed");
}

void write_report(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

int cmd_bench_ops(const Common& c, int reps, bool strict) {
  ContextPtr ctx = Context::create(c.params());
  Prng prng = Prng::from_u64(c.seed);
  SecretKey sk = keygen(*ctx, prng);
  OpBench b = bench_ops(*ctx, sk, prng, reps);
  const int t = ctx->params().decomp_log;
  std::cout << std::fixed << std::setprecision(2);
  std::cout << "op       T    micros\n";
  std::cout << "HAdd     -  " << std::setw(8) << b.hadd << "\n";
  std::cout << "PMult    -  " << std::setw(8) << b.pmult << "\n";
  std::cout << "CMult    -  " << std::setw(8) << b.cmult << "\n";
  std::cout << "DRot     -  " << std::setw(8) << b.drot << "\n";
  for (const auto& [d, us] : b.hrot) {
    std::cout << "HRot  " << std::setw(4) << d << "  " << std::setw(8) << us << "\n";
  }
  const double hrot = b.hrot.at(t);
  const bool order = b.ordering_ok(t);
  const bool ratio = hrot / b.pmult >= 10;
  const bool drot = hrot / b.drot >= 50;
  bool falling = true;
  for (auto it = b.hrot.begin(); std::next(it) != b.hrot.end(); ++it) {
    falling = falling && std::next(it)->second < it->second;
  }
  std::cout << "check ordering DRot < HAdd < PMult < HRot(T=" << t << "): " << verdict(order)
            << "\n";
  std::cout << "check HRot/PMult = " << hrot / b.pmult << " >= 10: " << verdict(ratio) << "\n";
  std::cout << "check HRot/DRot = " << hrot / b.drot << " >= 50: " << verdict(drot) << "\n";
  std::cout << "check HRot falls as T grows: " << verdict(falling) << "\n";
  std::ostringstream csv;
  b.write_csv(csv);
  write_report(c.report, csv.str());
  return strict && !(order && ratio && drot && falling) ? 1 : 0;
}

ConvGeometry parse_geometry(const std::string& s) {
  ConvGeometry g;
  char sep;
  std::istringstream in(s);
  if (!(in >> g.size >> sep >> g.in_channels >> sep >> g.out_channels >> sep >> g.kernel) ||
      g.size == 0 || g.in_channels == 0 || g.out_channels == 0 || g.kernel % 2 == 0) {
    throw UsageError("layer geometry must look like H:C_in:C_out:K with odd K, got " + s);
  }
  return g;
}

int cmd_bench_conv(const Common& c, std::vector<std::string> layers, int reps, int wf,
                   bool conventional) {
  ContextPtr ctx = Context::create(c.params());
  Prng prng = Prng::from_u64(c.seed);
  std::mt19937_64 rng(c.seed);
  SecretKey sk = keygen(*ctx, prng);
  if (layers.empty()) layers = {"64:64:64:3", "32:16:16:3", "16:32:32:3", "8:64:64:3", "4:64:64:3"};
  ConvBenchOptions opt{reps, c.threads, wf, 64, conventional};
  std::vector<ConvBench> rows;
  std::cout << std::fixed << std::setprecision(2);
  std::cout << std::left << std::setw(18) << "layer" << std::right << std::setw(12) << "conv ms"
            << std::setw(11) << "eager ms" << std::setw(10) << "lazy ms" << std::setw(12)
            << "threads ms" << std::setw(9) << "speedup" << std::setw(7) << "lazy" << std::setw(8)
            << "thread" << std::setw(14) << "budget f/p/c" << "\n";
  for (const std::string& s : layers) {
    ConvBench r = bench_conv(*ctx, sk, prng, parse_geometry(s), opt, rng);
    std::cout << std::left << std::setw(18) << r.geometry.label() << std::right << std::setw(12)
              << r.conventional_ms << std::setw(11) << r.eager_ms << std::setw(10) << r.lazy_ms
              << std::setw(12) << r.threaded_ms << std::setw(9)
              << (conventional ? r.speedup() : 0.0) << std::setw(7) << r.lazy_speedup()
              << std::setw(8) << r.thread_speedup() << std::setw(6) << r.fresh_budget << "/"
              << r.proposed_budget << "/" << r.conventional_budget << "\n";
    if (!r.proposed_exact || (conventional && !r.conventional_exact)) {
      std::cout << "  output differs from the plaintext convolution\n";
    }
    rows.push_back(r);
  }
  std::ostringstream csv;
  write_conv_csv(csv, rows);
  write_report(c.report, csv.str());
  return 0;
}

std::vector<Tensor> load_inputs(const std::string& path, const Model& m, int count, u64 seed) {
  std::vector<Tensor> out;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_array()) throw FormatError("input file must be a JSON array");
    auto one = [&](const nlohmann::json& a) {
      out.push_back(quantize_input(a.get<std::vector<double>>(), m.input, m.codec.frac_bits));
    };
    if (!j.empty() && j[0].is_array()) {
      for (const auto& a : j) one(a);
    } else {
      one(j);
    }
    return out;
  }
  // Uniform inputs in [-1, 1) at the model's input scale.
  std::mt19937_64 rng(seed);
  const i64 bound = i64{1} << m.input.scale;
  for (int i = 0; i < count; ++i) {
    Tensor t(m.input.channels, m.input.height, m.input.width);
    for (i64& v : t.data) v = static_cast<i64>(rng() % (2 * bound)) - bound;
    out.push_back(std::move(t));
  }
  return out;
}

std::size_t argmax(const std::vector<i64>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void serve(ContextPtr ctx, const Model& m, const Common& c, Endpoint& ep, int count) {
  Prng prng = Prng::from_u64(c.seed ^ 0x5e5e5e5eULL);
  ServerRunner server(ctx, m, c.engine(), prng);
  exchange_handshake(ep, make_handshake(*ctx, m));
  for (int i = 0; i < count; ++i) {
    server.offline();
    server.run(ep);
  }
}

// Activations evaluated per run, one per activation-layer value.
u64 activation_count(const Model& m) {
  u64 total = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].kind != LayerKind::kAct) continue;
    const Shape& s = m.shapes[i];
    total += static_cast<u64>(s.channels) * s.height * s.width;
  }
  return total;
}

int client(ContextPtr ctx, const Model& m, const Common& c, Endpoint& ep,
           const std::vector<Tensor>& inputs, bool check) {
  Prng prng = Prng::from_u64(c.seed);
  SecretKey sk = keygen(*ctx, prng);
  ClientRunner runner(ctx, m, sk, c.engine(), prng);
  exchange_handshake(ep, make_handshake(*ctx, m));
  int agree = 0;
  std::cout << std::fixed << std::setprecision(4);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    runner.offline();
    ClientResult r = runner.run(ep, inputs[t]);
    std::cout << "input " << t << " logits:";
    for (i64 v : r.logits) std::cout << " " << std::ldexp(static_cast<double>(v), -r.scale);
    std::cout << "  argmax " << argmax(r.logits);
    if (check) {
      OracleResult o = oracle_infer(m, inputs[t]);
      const bool same = argmax(o.logits) == argmax(r.logits);
      agree += same;
      std::cout << "  oracle argmax " << argmax(o.logits) << (same ? "" : " (differs)");
    }
    std::cout << "\n";
  }
  const TranscriptStats& st = ep.stats();
  std::cout << "\n";
  st.print(std::cout, true);
  u64 act_bytes = 0;
  u64 act_runs = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].kind != LayerKind::kAct) continue;
    auto it = st.layers().find(frame_layer(i));
    if (it != st.layers().end()) act_bytes += it->second.traffic.bytes();
    act_runs += runner.plan().outputs[i].ct_count;
  }
  const u64 acts = activation_count(m) * inputs.size();
  std::cout << "offline bytes: " << st.phase(Phase::kOffline).bytes() << "\n";
  std::cout << "online bytes: " << st.phase(Phase::kOnline).bytes() << "\n";
  std::cout << "activation bytes: " << act_bytes << " for " << acts << " activations ("
            << (acts ? act_bytes / 1024.0 / static_cast<double>(acts) : 0.0)
            << " KB each, " << act_bytes / 1024.0 / static_cast<double>(act_runs * ctx->n() * inputs.size())
            << " KB per slot)\n";
  std::cout << "max frame bytes: " << st.max_frame_bytes() << "\n";
  if (check) std::cout << "argmax agreement: " << agree << "/" << inputs.size() << "\n";
  std::ostringstream csv;
  st.write_csv(csv, true);
  csv << "summary,activations," << acts << ",,,,\n";
  csv << "summary,activation_bytes," << act_bytes << ",,,,\n";
  if (check) csv << "summary,argmax_agreement," << agree << "," << inputs.size() << ",,,\n";
  write_report(c.report, csv.str());
  return 0;
}

int cmd_run(const Common& c, const std::string& role, const std::string& model_path,
            const std::string& addr, const std::string& input_path, int count, bool check) {
  if (model_path.empty()) throw UsageError("--model is required");
  RingParams params = c.params();
  ContextPtr ctx = Context::create(params);
  Model m = load_model(model_path, params.p);
  if (role == "server") {
    TcpListener listener(addr);
    std::cout << "listening on port " << listener.port() << std::endl;
    Endpoint ep(listener.accept());
    serve(ctx, m, c, ep, count);
    std::cout << "served " << count << " inference(s)\n";
    ep.stats().print(std::cout, false);
    std::ostringstream csv;
    ep.stats().write_csv(csv, false);
    write_report(c.report, csv.str());
    return 0;
  }
  std::vector<Tensor> inputs = load_inputs(input_path, m, count, c.seed + 1);
  if (role == "client") {
    Endpoint ep(tcp_connect(addr, 50));
    return client(ctx, m, c, ep, inputs, check);
  }
  // both: server thread on a loopback listener.
  TcpListener listener(addr);
  const std::string host = addr.substr(0, addr.rfind(':'));
  std::exception_ptr failure;
  std::thread st([&] {
    try {
      Endpoint ep(listener.accept());
      serve(ctx, m, c, ep, static_cast<int>(inputs.size()));
    } catch (...) {
      failure = std::current_exception();
    }
  });
  int rc = 0;
  try {
    Endpoint ep(tcp_connect(host + ":" + std::to_string(listener.port())));
    rc = client(ctx, m, c, ep, inputs, check);
  } catch (...) {
    st.join();
    throw;
  }
  st.join();
  if (failure) std::rethrow_exception(failure);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid HE/2PC private inference"};
  app.require_subcommand(1);

  Common c;
  CLI::App* ops = app.add_subcommand("bench-ops", "Latency of HAdd, PMult, CMult, DRot, HRot");
  add_common(*ops, c);
  int reps = 200;
  bool strict = false;
  ops->add_option("--reps", reps, "Samples per operation")->check(CLI::PositiveNumber);
  ops->add_flag("--strict", strict, "Exit non-zero when a check fails");

  CLI::App* conv = app.add_subcommand("bench-conv", "Conventional versus proposed convolution");
  add_common(*conv, c);
  std::vector<std::string> layers;
  int conv_reps = 3, wf = 4;
  bool no_conventional = false;
  conv->add_option("--layer", layers, "H:C_in:C_out:K, repeatable");
  conv->add_option("--reps", conv_reps, "Samples per measurement")->check(CLI::PositiveNumber);
  conv->add_option("--weight-frac-bits", wf, "Fraction bits of the quantized weights");
  conv->add_flag("--no-conventional", no_conventional, "Skip running the conventional method");

  CLI::App* run = app.add_subcommand("run", "Private inference over TCP");
  add_common(*run, c);
  std::string role = "both", model, addr = "127.0.0.1:7000", input;
  int count = 1;
  bool check = false;
  run->add_option("--role", role, "server, client, or both in one process")
      ->check(CLI::IsMember({"server", "client", "both"}));
  run->add_option("--model", model, "Model manifest (JSON)");
  run->add_option("--addr", addr, "HOST:PORT; port 0 picks a free one with --role both");
  run->add_option("--input", input, "JSON array of input values, or an array of such arrays");
  run->add_option("--inputs", count, "Random inputs to run when --input is absent; the server "
                                     "must be given the same count")
      ->check(CLI::PositiveNumber);
  run->add_flag("--check", check, "Compare argmax with the plaintext oracle");

  CLI11_PARSE(app, argc, argv);
  try {
    if (ops->parsed()) return cmd_bench_ops(c, reps, strict);
    if (conv->parsed()) return cmd_bench_conv(c, layers, conv_reps, wf, !no_conventional);
    return cmd_run(c, role, model, addr, input, count, check);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
