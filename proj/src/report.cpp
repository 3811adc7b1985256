// SPDX-License-Identifier: Apache-2.0

#include "moeless/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace moeless {

namespace {

using json = nlohmann::ordered_json;

// Doubles rendered through %.9g so output bytes do not depend on the
// platform's default ostream precision.
std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

double round9(double v) {
  if (!std::isfinite(v)) return v;
  return std::stod(fmt9(v));
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string file_digest(const std::string& path) { return fnv1a_hex(read_file(path)); }

std::string summary_json(const MetricsReport& r) {
  json j;
  j["tool_version"] = kToolVersion;
  j["policy"] = r.policy;
  j["iterations"] = r.iterations;
  j["num_layers"] = r.num_layers;
  j["total_ms"] = round9(r.total_ms);
  j["mean_forward_ms"] = round9(r.mean_forward_ms);
  j["p50_forward_ms"] = round9(r.p50_forward_ms);
  j["p95_forward_ms"] = round9(r.p95_forward_ms);
  j["p99_forward_ms"] = round9(r.p99_forward_ms);
  j["cost_mb_ms"] = round9(r.cost_mb_ms);
  j["cost_serverful_mb_ms"] = round9(r.cost_serverful_mb_ms);
  j["mean_replicas_per_layer"] = round9(r.mean_replicas_per_layer);
  j["warm_total"] = r.warm_total;
  j["cold_total"] = r.cold_total;
  j["layer_mean_replicas"] = json::array();
  for (double v : r.layer_mean_replicas) j["layer_mean_replicas"].push_back(round9(v));
  j["layer_mean_accuracy"] = json::array();
  for (double v : r.layer_mean_accuracy) j["layer_mean_accuracy"].push_back(round9(v));
  j["layer_bootstrap_uses"] = r.layer_bootstrap_uses;
  return j.dump(2) + "\n";
}

std::string samples_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << kSamplesCsvHeader << "\n";
  for (const SampleRow& s : r.samples) {
    out << s.iteration << ',' << s.layer << ',' << r.policy << ',' << fmt9(s.forward_ms) << ','
        << s.replicas << ',' << s.warm << ',' << s.cold << "\n";
  }
  return out.str();
}

std::string comparison_json(const ComparisonReport& r) {
  json j;
  j["tool_version"] = kToolVersion;
  j["runs"] = json::array();
  for (const MetricsReport& m : r.runs) {
    json e;
    e["policy"] = m.policy;
    e["mean_forward_ms"] = round9(m.mean_forward_ms);
    e["p95_forward_ms"] = round9(m.p95_forward_ms);
    e["total_ms"] = round9(m.total_ms);
    e["cost_mb_ms"] = round9(m.cost_mb_ms);
    e["cost_serverful_mb_ms"] = round9(m.cost_serverful_mb_ms);
    e["mean_replicas_per_layer"] = round9(m.mean_replicas_per_layer);
    j["runs"].push_back(e);
  }
  json ratios = json::object();
  std::vector<std::string> keys;
  for (const auto& [k, v] : r.mean_forward_ratio) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (const auto& k : keys) ratios[k] = round9(r.mean_forward_ratio.at(k));
  j["mean_forward_ratio"] = ratios;
  return j.dump(2) + "\n";
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& param_name) {
  std::ostringstream out;
  out << param_name << ",mean_forward_ms,mean_replicas_per_layer,total_ms\n";
  for (const SweepRow& r : rows) {
    out << fmt9(r.value) << ',' << fmt9(r.mean_forward_ms) << ','
        << fmt9(r.mean_replicas_per_layer) << ',' << fmt9(r.total_ms) << "\n";
  }
  return out.str();
}

std::string manifest_json(const std::string& command, const std::string& config_digest,
                          const std::string& trace_digest, std::uint64_t seed,
                          const std::vector<std::string>& outputs) {
  json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["trace_digest"] = trace_digest;
  j["seed"] = seed;
  j["outputs"] = json::object();
  for (const std::string& path : outputs) {
    std::string name = path;
    const auto slash = name.find_last_of('/');
    if (slash != std::string::npos) name.erase(0, slash + 1);
    j["outputs"][name] = file_digest(path);
  }
  return j.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("percentile q must be in [0,1]");
  std::sort(values.begin(), values.end());
  if (q == 0.0) return values.front();
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  if (rank == 0) rank = 1;
  return values[rank - 1];
}

}  // namespace moeless
