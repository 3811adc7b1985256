// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "moeless/placer.hpp"
#include "moeless/scaler.hpp"
#include "moeless/types.hpp"

namespace moeless {

enum class Policy { moeless, static_ep, eplb, oracle_balance };

std::string policy_name(Policy p);
Policy parse_policy(const std::string& name);  // moeless|static|eplb|oracle_balance

// One replica per expert placed round-robin (expert e on GPU e mod G). Plan
// shares carry the given loads. Throws when a GPU cannot hold its experts.
std::pair<ScalingPlan, Placement> static_plan(const LoadVector& loads, const ModelSpec& model,
                                              const ClusterSpec& cluster);

// Budget-driven greedy replication on mean historical loads: the fixed budget
// of extra replicas goes one at a time to the expert with the largest
// per-replica share (same split rule as the scaler, no CV stop). Empty history
// means a uniform assumption.
ScalingPlan eplb_counts(const std::vector<LoadVector>& history, int layer, int replica_budget,
                        const ModelSpec& model);

// Periodic rebalancer state for one layer: recomputes counts and a cold
// shortest-queue placement when iteration % period == 0, otherwise reuses the
// previous plan.
class EplbState {
 public:
  EplbState(int period, int replica_budget);

  const ScalingPlan& plan() const { return plan_; }
  const Placement& placement() const { return placement_; }
  bool refreshed_last_step() const { return refreshed_; }

  void step(const std::vector<LoadVector>& history, int layer, const ModelSpec& model,
            const ClusterSpec& cluster, long iteration);

 private:
  int period_;
  int budget_;
  bool have_plan_ = false;
  bool refreshed_ = false;
  ScalingPlan plan_;
  Placement placement_;
};

// Analytic reference point: the layer's total load split perfectly across the
// G GPUs, one replica's worth per GPU. compute = alpha * total / G and
// comm = beta * total / G. Lossy: it prices G-way parallelism, so a plan with
// more concurrent replicas can undercut its compute term.
LayerMetrics oracle_balance_time(const LoadVector& actual, const ClusterSpec& cluster,
                                 const ModelSpec& model);

struct BruteForceResult {
  ScalingPlan plan;
  Placement placement;
  double forward_ms = 0.0;
};

// Exhaustive minimum of layer_forward_time over every replica-count vector
// within max_extra_replicas and every memory-feasible GPU assignment. Ties
// prefer fewer replicas, then first in enumeration order (counts, then
// assignments, lexicographic). Guarded to experts <= 4, gpus <= 3,
// max_extra_replicas <= 4.
BruteForceResult brute_force_optimal(const LoadVector& loads, const ModelSpec& model,
                                     const ClusterSpec& cluster, int max_extra_replicas);

}  // namespace moeless
