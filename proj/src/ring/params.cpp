#include "flash/ring/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flash/ring/modulus.hpp"
#include "json.hpp"

namespace flash {

int RingParams::decomp_count() const {
  int bits = std::bit_width(q);
  return (bits + decomp_log - 1) / decomp_log;
}

int RingParams::log_n() const { return std::countr_zero(n); }

int RingParams::cbd_eta() const {
  int eta = static_cast<int>(std::lround(2.0 * sigma * sigma));
  return eta < 1 ? 1 : eta;
}

void RingParams::validate() const {
  if (n < 2 || !std::has_single_bit(n)) {
    throw ParameterError("n must be a power of two");
  }
  if (q % (2 * n) != 1) throw ParameterError("q mod 2n != 1");
  if (p % (2 * n) != 1) throw ParameterError("p mod 2n != 1");
  if (p >= q) throw ParameterError("p must be smaller than q");
  if (!is_prime(q) || !is_prime(p)) throw ParameterError("q and p must be prime");
  if (std::bit_width(q) > 61) throw ParameterError("q wider than 61 bits");
  if (decomp_log < 1 || decomp_log > 60) {
    throw ParameterError("decomp_log out of range");
  }
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (cbd_eta() > 64) throw ParameterError("sigma too large");
}

u64 find_prime_above(u64 lower, u64 step) {
  u64 c = lower - (lower % step) + 1;
  if (c < lower) c += step;
  for (;; c += step) {
    if (is_prime(c)) return c;
  }
}

u64 find_prime_below_pow2(int bits, u64 step) {
  u64 top = (u64{1} << bits) - 1;
  u64 c = top - ((top - 1) % step);
  for (; c > step; c -= step) {
    if (is_prime(c)) return c;
  }
  throw ParameterError("no prime found");
}

RingParams search_params(u64 n, int q_bits, int p_bits, double sigma,
                         int decomp_log) {
  RingParams r;
  r.n = n;
  r.sigma = sigma;
  r.decomp_log = decomp_log;
  r.p = find_prime_above(u64{1} << p_bits, 2 * n);
  r.q = find_prime_below_pow2(q_bits, 2 * n * r.p);
  r.validate();
  return r;
}

RingParams default_params() {
  RingParams r;
  r.n = 2048;
  r.q = 1152921486375014401ULL;
  r.p = 270337;
  r.sigma = 3.2;
  r.decomp_log = 16;
  return r;
}

std::string params_to_json(const RingParams& params) {
  nlohmann::ordered_json j;
  j["n"] = params.n;
  j["q"] = params.q;
  j["p"] = params.p;
  j["sigma"] = params.sigma;
  j["decomp_log"] = params.decomp_log;
  return j.dump(2) + "\n";
}

RingParams params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("parameter file: ") + e.what());
  }
  RingParams r;
  try {
    r.n = j.at("n").get<u64>();
    r.q = j.at("q").get<u64>();
    r.p = j.at("p").get<u64>();
    r.sigma = j.at("sigma").get<double>();
    r.decomp_log = j.at("decomp_log").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("parameter file: ") + e.what());
  }
  r.validate();
  return r;
}

RingParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open parameter file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

void save_params(const RingParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << params_to_json(params);
}

}  // namespace flash
