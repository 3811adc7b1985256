// SPDX-License-Identifier: Apache-2.0
//
// moeless: trace-driven simulator for serverless mixture-of-experts serving.
// Subcommands: gen-trace, simulate, compare, sweep, oracle-check, report.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "moeless/baselines.hpp"
#include "moeless/config.hpp"
#include "moeless/cost_model.hpp"
#include "moeless/placer.hpp"
#include "moeless/report.hpp"
#include "moeless/rng.hpp"
#include "moeless/scaler.hpp"
#include "moeless/simulator.hpp"
#include "moeless/workload.hpp"

namespace {

using namespace moeless;

std::string default_out_dir() {
  const char* env = std::getenv("MOELESS_OUT_DIR");
  return env && *env ? std::string(env) : std::string("out");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void print_line(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  std::cout << buf << "\n";
}

int cmd_gen_trace(int count, double rate, std::uint64_t seed, const std::string& out,
                  const TokenDistParams& params) {
  const auto requests = gen_synthetic_trace(count, params, seed);
  write_trace(out, requests);
  std::int64_t prompt = 0, output = 0, span = 0;
  for (const auto& r : requests) {
    prompt += r.prompt_tokens;
    output += r.output_tokens;
    span = std::max(span, r.arrival_ms);
  }
  const double n = std::max<std::size_t>(requests.size(), 1);
  print_line("wrote %s: %zu requests over %lld ms, rate %.3g/s, seed %llu", out.c_str(),
             requests.size(), static_cast<long long>(span), rate,
             static_cast<unsigned long long>(seed));
  print_line("prompt tokens %lld (mean %.1f), output tokens %lld (mean %.1f)",
             static_cast<long long>(prompt), prompt / n, static_cast<long long>(output),
             output / n);
  print_line("digest %s", file_digest(out).c_str());
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& trace_path,
                 const std::string& out_dir, const std::string& policy_override,
                 bool seed_set, std::uint64_t seed_override) {
  SimConfig cfg = load_config(config_path);
  if (!policy_override.empty()) cfg.policy = parse_policy(policy_override);
  if (seed_set) cfg.seed = seed_override;
  cfg.validate();
  const auto trace = parse_trace(trace_path);

  const MetricsReport report = run(cfg, trace);
  std::filesystem::create_directories(out_dir);
  const std::string summary_path = join_path(out_dir, "summary.json");
  const std::string samples_path = join_path(out_dir, "samples.csv");
  write_file(summary_path, summary_json(report));
  write_file(samples_path, samples_csv(report));
  const std::string manifest_path = join_path(out_dir, "manifest.json");
  write_file(manifest_path,
             manifest_json("simulate", file_digest(config_path), file_digest(trace_path),
                           cfg.seed, {summary_path, samples_path}));
  print_line("policy %s: %ld iterations, mean forward %.4f ms, p95 %.4f ms",
             report.policy.c_str(), report.iterations, report.mean_forward_ms,
             report.p95_forward_ms);
  print_line("serverless cost %.6g MB*ms, serverful cost %.6g MB*ms", report.cost_mb_ms,
             report.cost_serverful_mb_ms);
  print_line("wrote %s, %s, %s", summary_path.c_str(), samples_path.c_str(),
             manifest_path.c_str());
  return 0;
}

int cmd_compare(const std::string& config_path, const std::string& trace_path,
                const std::string& out_dir, const std::string& policies) {
  const SimConfig base = load_config(config_path);
  std::vector<SimConfig> configs;
  std::string item;
  std::stringstream ss(policies);
  while (std::getline(ss, item, ',')) {
    SimConfig c = base;
    c.policy = parse_policy(item);
    configs.push_back(c);
  }
  if (configs.empty()) throw std::invalid_argument("--policies lists no policy");
  const auto trace = parse_trace(trace_path);
  const ComparisonReport report = run_comparison(configs, trace);

  std::filesystem::create_directories(out_dir);
  const std::string cmp_path = join_path(out_dir, "comparison.json");
  write_file(cmp_path, comparison_json(report));
  const std::string manifest_path = join_path(out_dir, "manifest.json");
  write_file(manifest_path, manifest_json("compare", file_digest(config_path),
                                          file_digest(trace_path), base.seed, {cmp_path}));
  for (const auto& m : report.runs)
    print_line("%-14s mean forward %.4f ms, serverless cost %.6g MB*ms", m.policy.c_str(),
               m.mean_forward_ms, m.cost_mb_ms);
  for (const auto& [key, value] : report.mean_forward_ratio)
    print_line("%s = %.4f", key.c_str(), value);
  print_line("wrote %s, %s", cmp_path.c_str(), manifest_path.c_str());
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& trace_path,
              const std::string& out_dir, const std::string& param, double from, double to,
              double step) {
  SweepParam p;
  std::string column;
  if (param == "cv" || param == "cv_threshold") {
    p = SweepParam::cv_threshold;
    column = "cv_threshold";
  } else if (param == "distance") {
    p = SweepParam::distance;
    column = "distance";
  } else {
    throw std::invalid_argument("--param must be cv or distance, got '" + param + "'");
  }
  const SimConfig base = load_config(config_path);
  const auto trace = parse_trace(trace_path);
  const auto rows = sweep(base, p, from, to, step, trace);

  std::filesystem::create_directories(out_dir);
  const std::string csv_path = join_path(out_dir, "sweep.csv");
  write_file(csv_path, sweep_csv(rows, column));
  const std::string manifest_path = join_path(out_dir, "manifest.json");
  write_file(manifest_path, manifest_json("sweep", file_digest(config_path),
                                          file_digest(trace_path), base.seed, {csv_path}));
  for (const auto& r : rows)
    print_line("%s %.4g: mean forward %.4f ms, %.3f replicas/layer", column.c_str(), r.value,
               r.mean_forward_ms, r.mean_replicas_per_layer);
  print_line("wrote %s, %s", csv_path.c_str(), manifest_path.c_str());
  return 0;
}

// Zipf-weighted multinomial loads with a per-instance rank permutation.
LoadVector random_instance_loads(int experts, double zipf_s, int tokens, std::uint64_t seed,
                                 long instance) {
  constexpr std::uint64_t kTag = 0x6f72636bULL;  // oracle-check stream
  auto eng = keyed_engine(seed, static_cast<std::uint64_t>(instance), 0, kTag);
  std::vector<int> perm(experts);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = experts - 1; i > 0; --i) {
    const int j = static_cast<int>(eng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<double> cum(experts);
  double total = 0.0;
  std::vector<double> weight(experts);
  for (int rank = 0; rank < experts; ++rank)
    weight[perm[rank]] = 1.0 / std::pow(rank + 1, zipf_s);
  for (int e = 0; e < experts; ++e) {
    total += weight[e];
    cum[e] = total;
  }
  LoadVector loads;
  loads.layer = 0;
  loads.loads.assign(experts, 0);
  for (int t = 0; t < tokens; ++t) {
    const double u = uniform01(eng) * total;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const int e = static_cast<int>(std::min<std::ptrdiff_t>(it - cum.begin(), experts - 1));
    ++loads.loads[e];
  }
  return loads;
}

int cmd_oracle_check(int instances, std::uint64_t seed, int experts, int gpus, int extra,
                     double zipf_s, double tolerance, double cv_threshold) {
  if (experts > 4 || gpus > 3 || extra > 4)
    throw std::invalid_argument("guards: --experts <= 4, --gpus <= 3, --extra <= 4");

  ModelSpec model;
  model.num_layers = 1;
  model.experts_per_layer = experts;
  model.top_k = 1;
  model.expert_mem_mb = 100.0;
  // The layer cap budgets extra-replica memory, so this matches the
  // max_extra_replicas bound handed to the exhaustive search.
  model.layer_mem_cap_mb = extra * model.expert_mem_mb;
  ClusterSpec cluster;
  cluster.gpu_count = gpus;
  cluster.gpu_mem_capacity_mb = 1e9;

  ScalerConfig scaler_cfg;
  scaler_cfg.cv_threshold = cv_threshold;

  std::vector<double> ratios;
  int dominated = 0, within = 0;
  for (long i = 0; i < instances; ++i) {
    const LoadVector loads = random_instance_loads(experts, zipf_s, 512, seed, i);
    const ScalingPlan plan = scale_experts(loads, model, scaler_cfg);
    const VerifyReport verify = verify_plan(plan, loads, model, scaler_cfg);
    if (!verify.ok)
      throw std::runtime_error("instance " + std::to_string(i) +
                               ": plan verification failed: " + verify.issues.front());
    ReplicaRegistry registry(0);
    const PlaceResult placed = place_experts(plan, cluster, registry, 0);
    const LayerMetrics heuristic =
        layer_forward_time(plan, placed.placement, loads, cluster, model);
    const BruteForceResult optimal = brute_force_optimal(loads, model, cluster, extra);
    const double ratio = heuristic.forward_ms / optimal.forward_ms;
    ratios.push_back(ratio);
    if (heuristic.forward_ms >= optimal.forward_ms - 1e-12) ++dominated;
    if (ratio <= tolerance) ++within;
  }

  const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / ratios.size();
  print_line("instances %d (experts %d, gpus %d, extra %d, zipf %.2f)", instances, experts,
             gpus, extra, zipf_s);
  print_line("dominance %d/%d (heuristic >= optimal)", dominated, instances);
  print_line("ratio mean %.4f, p50 %.4f, p95 %.4f, max %.4f", mean, percentile(ratios, 0.50),
             percentile(ratios, 0.95), *std::max_element(ratios.begin(), ratios.end()));
  print_line("within tolerance %.2f: %d/%d (%.1f%%)", tolerance, within, instances,
             100.0 * within / instances);
  if (dominated != instances) {
    std::cerr << "error: heuristic beat the exhaustive optimum; cost model is inconsistent\n";
    return 1;
  }
  return 0;
}

int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string summary_path = join_path(dir, "summary.json");
  const std::string cmp_path = join_path(dir, "comparison.json");
  if (fs::exists(summary_path)) {
    const auto j = nlohmann::json::parse(read_file(summary_path));
    print_line("policy %s, %ld iterations x %d layers",
               j.at("policy").get<std::string>().c_str(), j.at("iterations").get<long>(),
               j.at("num_layers").get<int>());
    print_line("forward ms: mean %.4f, p50 %.4f, p95 %.4f, p99 %.4f",
               j.at("mean_forward_ms").get<double>(), j.at("p50_forward_ms").get<double>(),
               j.at("p95_forward_ms").get<double>(), j.at("p99_forward_ms").get<double>());
    print_line("cost MB*ms: serverless %.6g, serverful %.6g", j.at("cost_mb_ms").get<double>(),
               j.at("cost_serverful_mb_ms").get<double>());
    print_line("replicas/layer %.3f, warm %lld, cold %lld",
               j.at("mean_replicas_per_layer").get<double>(),
               j.at("warm_total").get<long long>(), j.at("cold_total").get<long long>());
    return 0;
  }
  if (fs::exists(cmp_path)) {
    const auto j = nlohmann::json::parse(read_file(cmp_path));
    for (const auto& m : j.at("runs"))
      print_line("%-14s mean forward %.4f ms, serverless cost %.6g MB*ms",
                 m.at("policy").get<std::string>().c_str(),
                 m.at("mean_forward_ms").get<double>(), m.at("cost_mb_ms").get<double>());
    for (const auto& [key, value] : j.at("mean_forward_ratio").items())
      print_line("%s = %.4f", key.c_str(), value.get<double>());
    return 0;
  }
  throw std::runtime_error("no summary.json or comparison.json under " + dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-driven simulator for serverless mixture-of-experts serving"};
  app.require_subcommand(1);
  int exit_code = 0;

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "generate a synthetic request trace");
  int gen_count = 300;
  TokenDistParams dist;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--count", gen_count, "number of requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--rate", dist.arrival_rate_per_s, "mean arrivals per second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "random seed")->capture_default_str();
  gen->add_option("--prompt-log-mean", dist.prompt_log_mean, "lognormal mean of prompt tokens")
      ->capture_default_str();
  gen->add_option("--prompt-log-sigma", dist.prompt_log_sigma,
                  "lognormal sigma of prompt tokens")
      ->capture_default_str();
  gen->add_option("--output-log-mean", dist.output_log_mean, "lognormal mean of output tokens")
      ->capture_default_str();
  gen->add_option("--output-log-sigma", dist.output_log_sigma,
                  "lognormal sigma of output tokens")
      ->capture_default_str();
  gen->add_option("-o,--out", gen_out, "output trace path")->required();
  gen->callback([&] { exit_code = cmd_gen_trace(gen_count, dist.arrival_rate_per_s, gen_seed,
                                                gen_out, dist); });

  // simulate
  auto* sim = app.add_subcommand("simulate", "replay a trace under one policy");
  std::string sim_config, sim_trace, sim_out = default_out_dir(), sim_policy;
  std::uint64_t sim_seed = 0;
  sim->add_option("--config", sim_config, "config file")->required()->check(CLI::ExistingFile);
  sim->add_option("--trace", sim_trace, "trace file")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out", sim_out, "output directory")->capture_default_str();
  sim->add_option("--policy", sim_policy, "override policy (moeless|static|eplb|oracle_balance)");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "override seed");
  sim->callback([&] {
    exit_code = cmd_simulate(sim_config, sim_trace, sim_out, sim_policy,
                             sim_seed_opt->count() > 0, sim_seed);
  });

  // compare
  auto* cmp = app.add_subcommand("compare", "run several policies on one trace");
  std::string cmp_config, cmp_trace, cmp_out = default_out_dir();
  std::string cmp_policies = "moeless,static,eplb,oracle_balance";
  cmp->add_option("--config", cmp_config, "config file")->required()->check(CLI::ExistingFile);
  cmp->add_option("--trace", cmp_trace, "trace file")->required()->check(CLI::ExistingFile);
  cmp->add_option("-o,--out", cmp_out, "output directory")->capture_default_str();
  cmp->add_option("--policies", cmp_policies, "comma list of policies")->capture_default_str();
  cmp->callback([&] { exit_code = cmd_compare(cmp_config, cmp_trace, cmp_out, cmp_policies); });

  // sweep
  auto* swp = app.add_subcommand("sweep", "grid sweep of one parameter");
  std::string swp_config, swp_trace, swp_out = default_out_dir(), swp_param;
  double swp_from = 0.0, swp_to = 0.0, swp_step = 1.0;
  swp->add_option("--config", swp_config, "config file")->required()->check(CLI::ExistingFile);
  swp->add_option("--trace", swp_trace, "trace file")->required()->check(CLI::ExistingFile);
  swp->add_option("-o,--out", swp_out, "output directory")->capture_default_str();
  swp->add_option("--param", swp_param, "cv or distance")->required();
  swp->add_option("--from", swp_from, "grid start")->required();
  swp->add_option("--to", swp_to, "grid end (inclusive)")->required();
  swp->add_option("--step", swp_step, "grid step")->check(CLI::PositiveNumber)
      ->capture_default_str();
  swp->callback([&] {
    exit_code = cmd_sweep(swp_config, swp_trace, swp_out, swp_param, swp_from, swp_to, swp_step);
  });

  // oracle-check
  auto* chk = app.add_subcommand("oracle-check",
                                 "compare the heuristic against brute-force optima");
  int chk_instances = 200, chk_experts = 4, chk_gpus = 3, chk_extra = 4;
  std::uint64_t chk_seed = 1;
  double chk_zipf = 1.2, chk_tol = 1.5, chk_cv = 0.2;
  chk->add_option("--instances", chk_instances, "instance count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  chk->add_option("--seed", chk_seed, "random seed")->capture_default_str();
  chk->add_option("--experts", chk_experts, "experts per instance (max 4)")
      ->capture_default_str();
  chk->add_option("--gpus", chk_gpus, "gpu count (max 3)")->capture_default_str();
  chk->add_option("--extra", chk_extra, "extra replica budget (max 4)")->capture_default_str();
  chk->add_option("--zipf", chk_zipf, "zipf exponent for loads")->capture_default_str();
  chk->add_option("--tolerance", chk_tol, "reported ratio tolerance")->capture_default_str();
  chk->add_option("--cv", chk_cv, "scaler cv threshold")->capture_default_str();
  chk->callback([&] {
    exit_code = cmd_oracle_check(chk_instances, chk_seed, chk_experts, chk_gpus, chk_extra,
                                 chk_zipf, chk_tol, chk_cv);
  });

  // report
  auto* rep = app.add_subcommand("report", "print a run directory's results");
  std::string rep_dir = default_out_dir();
  rep->add_option("-d,--dir", rep_dir, "run directory")->capture_default_str();
  rep->callback([&] { exit_code = cmd_report(rep_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
