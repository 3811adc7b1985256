// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "moeless/placer.hpp"
#include "moeless/types.hpp"

namespace moeless {

// Time for one replica to process its share of tokens: alpha * load_share.
double replica_time(double load_share_tokens, double alpha_ms_per_token);

// Per-GPU transfer time for one direction of the token exchange: each GPU pays
// beta times the total share routed to replicas it hosts. Validates that every
// replica of the plan is placed exactly once.
std::vector<double> gpu_comm_times(const ScalingPlan& plan, const Placement& placement,
                                   double beta_ms_per_token);

// Evaluates a (plan, placement) pair against the loads that actually arrived.
// Actual per-replica load is actual[e] / replica_counts[e]: the dispatcher
// splits an expert's tokens evenly over its replicas.
LayerMetrics layer_forward_time(const ScalingPlan& plan, const Placement& placement,
                                const LoadVector& actual, const ClusterSpec& cluster,
                                const ModelSpec& model);

// Population coefficient of variation: stddev / mean. Zero mean yields zero.
// Throws on an empty sample.
double coefficient_of_variation(const std::vector<double>& values);

// Resident-cluster convention: every expert of every layer stays in memory for
// the whole run. cost = (E * L * expert_mem + m_misc) * total_ms.
double serverful_cost(double total_ms, const ModelSpec& model, const ClusterSpec& cluster);

}  // namespace moeless
