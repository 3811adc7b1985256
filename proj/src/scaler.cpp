// SPDX-License-Identifier: Apache-2.0

#include "moeless/scaler.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>

namespace moeless {

namespace {

constexpr double kCvTolerance = 1e-9;

// CV over the multiset of per-replica shares; expert e contributes its share
// counts[e] times. Zero-load experts can be excluded to keep dead experts from
// inflating the imbalance signal.
double shares_cv(const std::vector<std::int64_t>& loads, const std::vector<int>& counts,
                 bool exclude_zero) {
  double sum = 0.0;
  long n = 0;
  for (std::size_t e = 0; e < loads.size(); ++e) {
    if (exclude_zero && loads[e] == 0) continue;
    sum += static_cast<double>(loads[e]);
    n += counts[e];
  }
  if (n == 0) return 0.0;
  const double mean = sum / n;
  if (mean == 0.0) return 0.0;
  double sq = 0.0;
  for (std::size_t e = 0; e < loads.size(); ++e) {
    if (exclude_zero && loads[e] == 0) continue;
    const double s = static_cast<double>(loads[e]) / counts[e];
    sq += counts[e] * (s - mean) * (s - mean);
  }
  return std::sqrt(sq / n) / mean;
}

struct HeapItem {
  Rational share;
  int expert;
};

struct HeapLess {
  bool operator()(const HeapItem& a, const HeapItem& b) const {
    if (a.share != b.share) return a.share < b.share;
    return a.expert > b.expert;  // ties resolve to the lowest expert index
  }
};

}  // namespace

ScalingPlan scale_experts(const LoadVector& predicted, const ModelSpec& model,
                          const ScalerConfig& config, ScaleTrace* trace) {
  model.validate();
  if (config.cv_threshold < 0) throw std::invalid_argument("cv_threshold must be >= 0");
  const int experts = static_cast<int>(predicted.loads.size());
  if (experts == 0) throw std::invalid_argument("load vector is empty");
  if (experts != model.experts_per_layer)
    throw std::invalid_argument("load vector does not match experts_per_layer");
  for (auto v : predicted.loads)
    if (v < 0) throw std::invalid_argument("negative predicted load");

  ScalingPlan plan;
  plan.layer = predicted.layer;
  plan.replica_counts.assign(experts, 1);
  plan.alloc_mem_mb = 0.0;
  plan.expert_mem_mb = model.expert_mem_mb;

  std::priority_queue<HeapItem, std::vector<HeapItem>, HeapLess> heap;
  for (int e = 0; e < experts; ++e) heap.push({Rational(predicted.loads[e], 1), e});

  double cv = shares_cv(predicted.loads, plan.replica_counts, config.exclude_zero_loads_from_cv);
  while (plan.alloc_mem_mb + model.expert_mem_mb <= model.layer_mem_cap_mb &&
         cv > config.cv_threshold) {
    const HeapItem top = heap.top();
    heap.pop();
    const int e = top.expert;
    plan.replica_counts[e] += 1;
    plan.alloc_mem_mb += model.expert_mem_mb;
    heap.push({Rational(predicted.loads[e], plan.replica_counts[e]), e});
    cv = shares_cv(predicted.loads, plan.replica_counts, config.exclude_zero_loads_from_cv);
    if (trace) {
      trace->split_expert.push_back(e);
      trace->max_share.push_back(heap.top().share);
      trace->cv.push_back(cv);
    }
  }

  plan.shares.reserve(plan.total_replicas());
  for (int e = 0; e < experts; ++e)
    for (int r = 0; r < plan.replica_counts[e]; ++r)
      plan.shares.push_back({e, r, Rational(predicted.loads[e], plan.replica_counts[e])});
  return plan;
}

VerifyReport verify_plan(const ScalingPlan& plan, const LoadVector& predicted,
                         const ModelSpec& model, const ScalerConfig& config) {
  VerifyReport report;
  auto fail = [&](const std::string& msg) {
    report.ok = false;
    report.issues.push_back(msg);
  };

  const int experts = static_cast<int>(predicted.loads.size());
  if (static_cast<int>(plan.replica_counts.size()) != experts) {
    fail("replica_counts has " + std::to_string(plan.replica_counts.size()) +
         " entries for " + std::to_string(experts) + " experts");
    return report;
  }
  for (int e = 0; e < experts; ++e)
    if (plan.replica_counts[e] < 1)
      fail("expert " + std::to_string(e) + " has replica count " +
           std::to_string(plan.replica_counts[e]));
  if (!report.ok) return report;

  // Group the flat share list and check coverage, equality, and conservation.
  std::vector<std::vector<const ReplicaShare*>> by_expert(experts);
  for (const auto& s : plan.shares) {
    if (s.expert < 0 || s.expert >= experts) {
      fail("share entry names unknown expert " + std::to_string(s.expert));
      return report;
    }
    by_expert[s.expert].push_back(&s);
  }
  for (int e = 0; e < experts; ++e) {
    const int count = plan.replica_counts[e];
    if (static_cast<int>(by_expert[e].size()) != count) {
      fail("expert " + std::to_string(e) + " lists " + std::to_string(by_expert[e].size()) +
           " shares for " + std::to_string(count) + " replicas");
      continue;
    }
    std::vector<bool> seen(count, false);
    Rational sum(0);
    bool equal = true;
    for (const auto* s : by_expert[e]) {
      if (s->ordinal < 0 || s->ordinal >= count || seen[s->ordinal]) {
        fail("expert " + std::to_string(e) + " has duplicate or out-of-range ordinal " +
             std::to_string(s->ordinal));
        equal = false;
        break;
      }
      seen[s->ordinal] = true;
      sum = sum + s->share;
      if (s->share != by_expert[e][0]->share) equal = false;
    }
    if (!equal) {
      fail("expert " + std::to_string(e) + " has unequal replica shares");
      continue;
    }
    if (sum != Rational(predicted.loads[e], 1))
      fail("expert " + std::to_string(e) + " shares sum to " + std::to_string(sum.to_double()) +
           ", load is " + std::to_string(predicted.loads[e]));
  }

  const double expected_alloc = (plan.total_replicas() - experts) * model.expert_mem_mb;
  if (std::abs(plan.alloc_mem_mb - expected_alloc) > 1e-6)
    fail("alloc_mem_mb " + std::to_string(plan.alloc_mem_mb) + " does not match replicas (" +
         std::to_string(expected_alloc) + ")");
  if (plan.alloc_mem_mb > model.layer_mem_cap_mb + 1e-6)
    fail("alloc_mem_mb exceeds layer_mem_cap_mb");

  const double cv =
      shares_cv(predicted.loads, plan.replica_counts, config.exclude_zero_loads_from_cv);
  const bool budget_exhausted =
      plan.alloc_mem_mb + model.expert_mem_mb > model.layer_mem_cap_mb;
  if (cv > config.cv_threshold + kCvTolerance && !budget_exhausted)
    fail("plan stopped with CV " + std::to_string(cv) + " above threshold and budget left");

  return report;
}

}  // namespace moeless
