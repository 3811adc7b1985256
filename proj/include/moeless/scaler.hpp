// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "moeless/types.hpp"

namespace moeless {

struct ScalerConfig {
  double cv_threshold = 0.2;            // stop splitting once CV of shares is at or below this
  bool exclude_zero_loads_from_cv = false;
};

// Step-by-step record of a scaling run, for tests and debugging.
struct ScaleTrace {
  std::vector<int> split_expert;        // expert split at each step
  std::vector<Rational> max_share;      // max per-replica share after each step
  std::vector<double> cv;               // CV of shares after each step
};

// Greedy expert scaling for one layer. Starts from one replica per expert;
// while CV of per-replica shares exceeds the threshold and one more replica
// fits the layer's memory budget, adds a replica to the expert with the
// largest per-replica share (ties: lowest expert index) and re-splits that
// expert's load evenly. Shares are exact rationals.
ScalingPlan scale_experts(const LoadVector& predicted, const ModelSpec& model,
                          const ScalerConfig& config, ScaleTrace* trace = nullptr);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> issues;
};

// Structural check of a plan against the loads it was built from: counts
// present and positive, shares equal within each expert, per-expert shares
// summing exactly to the predicted load, memory ledger consistent with the
// budget, and the stop condition (CV met or budget exhausted) satisfied.
VerifyReport verify_plan(const ScalingPlan& plan, const LoadVector& predicted,
                         const ModelSpec& model, const ScalerConfig& config);

}  // namespace moeless
