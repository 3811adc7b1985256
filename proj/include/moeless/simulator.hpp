// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moeless/baselines.hpp"
#include "moeless/predictor.hpp"
#include "moeless/scaler.hpp"
#include "moeless/types.hpp"
#include "moeless/workload.hpp"

namespace moeless {

struct WorkloadParams {
  double zipf_exponent = 1.2;
  double zipf_exponent_decode = -1.0;  // < 0: same as prefill
  bool shared_permutation = false;
  int drift_period = 0;
};

enum class PlacementMode { jsq, static_rr };

struct SimConfig {
  ClusterSpec cluster;
  ModelSpec model;
  WorkloadParams workload;
  PredictorProfile predictor;
  ScalerConfig scaler;
  Policy policy = Policy::moeless;
  int eplb_period = 600;
  int eplb_replica_budget = -1;  // -1: one per GPU
  int keep_alive_iters = 50;
  double cold_start_ms = 0.0;    // charged per layer with any cold replica, synchronous mode only
  bool persist_plans = false;    // plan on prefill batches only, reuse through decode steps
  PlacementMode placement = PlacementMode::jsq;  // static_rr pins replicas round-robin (ablation)
  PlacerOptions placer;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SampleRow {
  long iteration = 0;
  int layer = 0;
  double forward_ms = 0.0;
  int replicas = 0;
  int warm = 0;
  int cold = 0;
};

// Captured only when run() is asked to: the planning inputs per (iteration,
// layer), for separation audits and plan replay in tests.
struct DebugTrace {
  std::vector<LoadVector> predicted;
  std::vector<LoadVector> actual;
  std::vector<std::vector<int>> replica_counts;
};

struct MetricsReport {
  std::string policy;
  long iterations = 0;
  int num_layers = 0;
  double total_ms = 0.0;            // sum of all layer forward times
  double cost_mb_ms = 0.0;          // pay-per-use convention
  double cost_serverful_mb_ms = 0.0;
  double p50_forward_ms = 0.0;
  double p95_forward_ms = 0.0;
  double p99_forward_ms = 0.0;
  double mean_forward_ms = 0.0;
  double mean_replicas_per_layer = 0.0;
  long warm_total = 0;
  long cold_total = 0;
  std::vector<double> layer_mean_replicas;
  std::vector<double> layer_mean_accuracy;  // realized overlap of plan inputs vs actuals
  std::vector<long> layer_bootstrap_uses;   // historical fallbacks (short history / l < d)
  std::vector<SampleRow> samples;
  DebugTrace debug;  // filled only on request, never serialized
};

MetricsReport run(const SimConfig& config, const std::vector<Request>& trace,
                  bool capture_debug = false);

struct ComparisonReport {
  std::vector<MetricsReport> runs;
  // "<a>_vs_<b>" -> mean forward time of a divided by b's.
  std::map<std::string, double> mean_forward_ratio;
};

// Same trace and seed for every config; throws when seeds or workload shape
// differ between entries.
ComparisonReport run_comparison(const std::vector<SimConfig>& configs,
                                const std::vector<Request>& trace);

enum class SweepParam { cv_threshold, distance };

struct SweepRow {
  double value = 0.0;
  double mean_forward_ms = 0.0;
  double mean_replicas_per_layer = 0.0;
  double total_ms = 0.0;
};

// One run per grid point, identical trace and seed throughout. Points run
// concurrently; rows come back in grid order.
std::vector<SweepRow> sweep(const SimConfig& base, SweepParam param, double from, double to,
                            double step, const std::vector<Request>& trace);

}  // namespace moeless
