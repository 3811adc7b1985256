// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moeless/rational.hpp"

namespace moeless {

// Cluster constants. alpha/beta are the per-token processing and transfer
// coefficients of the linear cost model; t_misc/m_misc cover the non-MoE part
// of a layer (attention, norms). All four are calibration knobs.
struct ClusterSpec {
  int gpu_count = 1;
  double gpu_mem_capacity_mb = 48000.0;
  double alpha_ms_per_token = 0.01;
  double beta_ms_per_token = 0.002;
  double t_misc_ms = 0.5;
  double m_misc_mb = 0.0;

  void validate() const;
};

struct ModelSpec {
  int num_layers = 2;  // smallest layer count compatible with the default prediction distance
  int experts_per_layer = 1;
  int top_k = 1;
  double expert_mem_mb = 330.0;
  double layer_mem_cap_mb = 0.0;  // replica budget per layer, beyond the first replica of each expert

  void validate() const;
};

// Per-expert routed token counts for one layer of one iteration.
struct LoadVector {
  int layer = 0;
  std::vector<std::int64_t> loads;

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : loads) t += v;
    return t;
  }
};

struct ReplicaShare {
  int expert = 0;
  int ordinal = 0;     // replica index within the expert, 0-based
  Rational share;      // predicted load carried by this replica
};

// Replication decision for one layer: every expert has at least one replica and
// its predicted load is split evenly over its replicas.
struct ScalingPlan {
  int layer = 0;
  std::vector<int> replica_counts;       // per expert, >= 1
  std::vector<ReplicaShare> shares;      // flat, ordered by (expert, ordinal)
  double alloc_mem_mb = 0.0;             // memory charged beyond one replica per expert
  double expert_mem_mb = 0.0;            // size of one replica

  int total_replicas() const {
    int t = 0;
    for (int c : replica_counts) t += c;
    return t;
  }
};

// Forward-time decomposition of one layer of one iteration, evaluated on
// actual loads: forward = compute + 2 * comm + t_misc.
struct LayerMetrics {
  double compute_ms = 0.0;   // slowest replica
  double comm_ms = 0.0;      // slowest GPU's transfer time, counted twice (scatter + gather)
  double forward_ms = 0.0;
  int replica_count = 0;
  double mem_mb = 0.0;       // replica memory instantiated for the layer
  double cost_mb_ms = 0.0;   // pay-per-use: active time x active memory
};

}  // namespace moeless
