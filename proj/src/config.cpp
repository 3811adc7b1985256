// SPDX-License-Identifier: Apache-2.0

#include "moeless/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace moeless {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + value + "'");
}

PredictorKind parse_kind(const std::string& value) {
  if (value == "oracle") return PredictorKind::oracle;
  if (value == "noisy") return PredictorKind::noisy;
  if (value == "historical") return PredictorKind::historical;
  throw std::invalid_argument("predictor_kind: expected oracle|noisy|historical, got '" + value +
                              "'");
}

// "ramp:a:b", "flat:x", or a comma list with one accuracy per layer.
std::vector<double> build_accuracy_profile(const std::string& spec, int num_layers) {
  std::vector<double> out;
  if (spec.rfind("ramp:", 0) == 0) {
    const auto rest = spec.substr(5);
    const auto colon = rest.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("accuracy_profile: ramp needs 'ramp:first:last'");
    const double a = parse_double("accuracy_profile", rest.substr(0, colon));
    const double b = parse_double("accuracy_profile", rest.substr(colon + 1));
    for (int l = 0; l < num_layers; ++l) {
      const double t = num_layers == 1 ? 0.0 : static_cast<double>(l) / (num_layers - 1);
      out.push_back(a + (b - a) * t);
    }
    return out;
  }
  if (spec.rfind("flat:", 0) == 0) {
    const double a = parse_double("accuracy_profile", spec.substr(5));
    out.assign(num_layers, a);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double("accuracy_profile", trim(item)));
  if (static_cast<int>(out.size()) != num_layers)
    throw std::invalid_argument("accuracy_profile: lists " + std::to_string(out.size()) +
                                " values for " + std::to_string(num_layers) + " layers");
  return out;
}

}  // namespace

SimConfig parse_config_text(const std::string& text, const std::string& origin) {
  SimConfig cfg;
  std::string accuracy_spec = "ramp:0.70:0.95";
  bool finetune = false;

  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos)
      throw std::invalid_argument(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument(where + ": expected 'key = value'");

    if (key == "gpu_count") cfg.cluster.gpu_count = static_cast<int>(parse_int(key, value));
    else if (key == "gpu_mem_capacity_mb") cfg.cluster.gpu_mem_capacity_mb = parse_double(key, value);
    else if (key == "alpha_ms_per_token") cfg.cluster.alpha_ms_per_token = parse_double(key, value);
    else if (key == "beta_ms_per_token") cfg.cluster.beta_ms_per_token = parse_double(key, value);
    else if (key == "t_misc_ms") cfg.cluster.t_misc_ms = parse_double(key, value);
    else if (key == "m_misc_mb") cfg.cluster.m_misc_mb = parse_double(key, value);
    else if (key == "num_layers") cfg.model.num_layers = static_cast<int>(parse_int(key, value));
    else if (key == "experts_per_layer") cfg.model.experts_per_layer = static_cast<int>(parse_int(key, value));
    else if (key == "top_k") cfg.model.top_k = static_cast<int>(parse_int(key, value));
    else if (key == "expert_mem_mb") cfg.model.expert_mem_mb = parse_double(key, value);
    else if (key == "layer_mem_cap_mb") cfg.model.layer_mem_cap_mb = parse_double(key, value);
    else if (key == "policy") cfg.policy = parse_policy(value);
    else if (key == "eplb_period_iters") cfg.eplb_period = static_cast<int>(parse_int(key, value));
    else if (key == "eplb_replica_budget") cfg.eplb_replica_budget = static_cast<int>(parse_int(key, value));
    else if (key == "predictor_kind") cfg.predictor.kind = parse_kind(value);
    else if (key == "prediction_distance") cfg.predictor.distance = static_cast<int>(parse_int(key, value));
    else if (key == "accuracy_profile") accuracy_spec = value;
    else if (key == "accuracy_threshold") cfg.predictor.accuracy_threshold = parse_double(key, value);
    else if (key == "accuracy_distance_decay") cfg.predictor.distance_decay = parse_double(key, value);
    else if (key == "apply_finetuning") finetune = parse_bool(key, value);
    else if (key == "history_window") cfg.predictor.history_window = static_cast<int>(parse_int(key, value));
    else if (key == "cv_threshold") cfg.scaler.cv_threshold = parse_double(key, value);
    else if (key == "cv_excludes_zero_loads") cfg.scaler.exclude_zero_loads_from_cv = parse_bool(key, value);
    else if (key == "keep_alive_iters") cfg.keep_alive_iters = static_cast<int>(parse_int(key, value));
    else if (key == "cold_start_ms") cfg.cold_start_ms = parse_double(key, value);
    else if (key == "placement_mode") {
      if (value == "jsq") cfg.placement = PlacementMode::jsq;
      else if (value == "static_rr") cfg.placement = PlacementMode::static_rr;
      else throw std::invalid_argument("placement_mode: expected jsq|static_rr, got '" + value + "'");
    }
    else if (key == "placer_load_includes_compute") cfg.placer.load_includes_compute = parse_bool(key, value);
    else if (key == "zipf_exponent") cfg.workload.zipf_exponent = parse_double(key, value);
    else if (key == "zipf_exponent_decode") cfg.workload.zipf_exponent_decode = parse_double(key, value);
    else if (key == "shared_permutation") cfg.workload.shared_permutation = parse_bool(key, value);
    else if (key == "drift_period_iters") cfg.workload.drift_period = static_cast<int>(parse_int(key, value));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "persist_plans") cfg.persist_plans = parse_bool(key, value);
    else throw std::invalid_argument(where + ": unknown config key '" + key + "'");
  }

  cfg.predictor.per_layer_accuracy = build_accuracy_profile(accuracy_spec, cfg.model.num_layers);
  cfg.predictor.fine_tuned.assign(cfg.model.num_layers, false);
  if (finetune) {
    if (cfg.predictor.kind != PredictorKind::noisy)
      throw std::invalid_argument("apply_finetuning: requires predictor_kind = noisy");
    apply_layer_aware_finetuning(cfg.predictor);
  }
  cfg.placer.alpha_ms_per_token = cfg.cluster.alpha_ms_per_token;
  cfg.placer.beta_ms_per_token = cfg.cluster.beta_ms_per_token;
  cfg.validate();
  return cfg;
}

SimConfig load_config(const std::string& path) {
  if (path.empty()) {
    SimConfig cfg;
    cfg.predictor = make_ramp_profile(cfg.model.num_layers, 0.70, 0.95);
    cfg.validate();
    return cfg;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string config_to_text(const SimConfig& cfg) {
  char num[64];
  auto fmt = [&](double v) {
    std::snprintf(num, sizeof(num), "%.17g", v);
    return std::string(num);
  };
  std::ostringstream out;
  out << "accuracy_distance_decay = " << fmt(cfg.predictor.distance_decay) << "\n";
  out << "accuracy_profile = ";
  for (std::size_t l = 0; l < cfg.predictor.per_layer_accuracy.size(); ++l)
    out << (l ? "," : "") << fmt(cfg.predictor.per_layer_accuracy[l]);
  out << "\n";
  out << "accuracy_threshold = " << fmt(cfg.predictor.accuracy_threshold) << "\n";
  out << "alpha_ms_per_token = " << fmt(cfg.cluster.alpha_ms_per_token) << "\n";
  out << "beta_ms_per_token = " << fmt(cfg.cluster.beta_ms_per_token) << "\n";
  out << "cold_start_ms = " << fmt(cfg.cold_start_ms) << "\n";
  out << "cv_excludes_zero_loads = " << (cfg.scaler.exclude_zero_loads_from_cv ? "true" : "false") << "\n";
  out << "cv_threshold = " << fmt(cfg.scaler.cv_threshold) << "\n";
  out << "drift_period_iters = " << cfg.workload.drift_period << "\n";
  out << "eplb_period_iters = " << cfg.eplb_period << "\n";
  out << "eplb_replica_budget = " << cfg.eplb_replica_budget << "\n";
  out << "experts_per_layer = " << cfg.model.experts_per_layer << "\n";
  out << "expert_mem_mb = " << fmt(cfg.model.expert_mem_mb) << "\n";
  out << "gpu_count = " << cfg.cluster.gpu_count << "\n";
  out << "gpu_mem_capacity_mb = " << fmt(cfg.cluster.gpu_mem_capacity_mb) << "\n";
  out << "history_window = " << cfg.predictor.history_window << "\n";
  out << "keep_alive_iters = " << cfg.keep_alive_iters << "\n";
  out << "layer_mem_cap_mb = " << fmt(cfg.model.layer_mem_cap_mb) << "\n";
  out << "m_misc_mb = " << fmt(cfg.cluster.m_misc_mb) << "\n";
  out << "num_layers = " << cfg.model.num_layers << "\n";
  out << "persist_plans = " << (cfg.persist_plans ? "true" : "false") << "\n";
  out << "placement_mode = " << (cfg.placement == PlacementMode::jsq ? "jsq" : "static_rr") << "\n";
  out << "placer_load_includes_compute = " << (cfg.placer.load_includes_compute ? "true" : "false") << "\n";
  out << "policy = " << policy_name(cfg.policy) << "\n";
  out << "prediction_distance = " << cfg.predictor.distance << "\n";
  out << "predictor_kind = "
      << (cfg.predictor.kind == PredictorKind::oracle
              ? "oracle"
              : cfg.predictor.kind == PredictorKind::noisy ? "noisy" : "historical")
      << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "shared_permutation = " << (cfg.workload.shared_permutation ? "true" : "false") << "\n";
  out << "t_misc_ms = " << fmt(cfg.cluster.t_misc_ms) << "\n";
  out << "top_k = " << cfg.model.top_k << "\n";
  out << "zipf_exponent = " << fmt(cfg.workload.zipf_exponent) << "\n";
  out << "zipf_exponent_decode = " << fmt(cfg.workload.zipf_exponent_decode) << "\n";
  return out.str();
}

}  // namespace moeless
