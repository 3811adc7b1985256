// SPDX-License-Identifier: Apache-2.0

#include "moeless/baselines.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

#include "moeless/cost_model.hpp"

namespace moeless {

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::moeless: return "moeless";
    case Policy::static_ep: return "static";
    case Policy::eplb: return "eplb";
    case Policy::oracle_balance: return "oracle_balance";
  }
  throw std::logic_error("unknown policy");
}

Policy parse_policy(const std::string& name) {
  if (name == "moeless") return Policy::moeless;
  if (name == "static") return Policy::static_ep;
  if (name == "eplb") return Policy::eplb;
  if (name == "oracle_balance") return Policy::oracle_balance;
  throw std::invalid_argument("unknown policy '" + name +
                              "' (expected moeless|static|eplb|oracle_balance)");
}

std::pair<ScalingPlan, Placement> static_plan(const LoadVector& loads, const ModelSpec& model,
                                              const ClusterSpec& cluster) {
  model.validate();
  cluster.validate();
  const int experts = static_cast<int>(loads.loads.size());
  if (experts != model.experts_per_layer)
    throw std::invalid_argument("load vector does not match experts_per_layer");

  ScalingPlan plan;
  plan.layer = loads.layer;
  plan.replica_counts.assign(experts, 1);
  plan.alloc_mem_mb = 0.0;
  plan.expert_mem_mb = model.expert_mem_mb;
  for (int e = 0; e < experts; ++e) plan.shares.push_back({e, 0, Rational(loads.loads[e], 1)});

  Placement placement;
  placement.layer = loads.layer;
  placement.gpu_for.assign(experts, {});
  placement.per_gpu_mem_mb.assign(cluster.gpu_count, 0.0);
  for (int e = 0; e < experts; ++e) {
    const int g = e % cluster.gpu_count;
    placement.gpu_for[e] = {g};
    placement.per_gpu_mem_mb[g] += model.expert_mem_mb;
  }
  for (int g = 0; g < cluster.gpu_count; ++g)
    if (placement.per_gpu_mem_mb[g] > cluster.gpu_mem_capacity_mb + 1e-9)
      throw std::runtime_error("static placement does not fit GPU " + std::to_string(g));
  return {plan, placement};
}

namespace {

struct HeapItem {
  Rational share;
  int expert;
};
struct HeapLess {
  bool operator()(const HeapItem& a, const HeapItem& b) const {
    if (a.share != b.share) return a.share < b.share;
    return a.expert > b.expert;
  }
};

}  // namespace

ScalingPlan eplb_counts(const std::vector<LoadVector>& history, int layer, int replica_budget,
                        const ModelSpec& model) {
  model.validate();
  if (replica_budget < 0) throw std::invalid_argument("replica budget must be >= 0");
  const int experts = model.experts_per_layer;

  // Mean historical load per expert, kept exact as sum/n; with no history the
  // rebalancer assumes uniform usage.
  std::vector<Rational> mean(experts, Rational(1, 1));
  if (!history.empty()) {
    std::vector<std::int64_t> sums(experts, 0);
    for (const auto& h : history) {
      if (static_cast<int>(h.loads.size()) != experts)
        throw std::invalid_argument("history vector has wrong expert count");
      for (int e = 0; e < experts; ++e) sums[e] += h.loads[e];
    }
    for (int e = 0; e < experts; ++e)
      mean[e] = Rational(sums[e], static_cast<std::int64_t>(history.size()));
  }

  ScalingPlan plan;
  plan.layer = layer;
  plan.replica_counts.assign(experts, 1);
  plan.alloc_mem_mb = replica_budget * model.expert_mem_mb;
  plan.expert_mem_mb = model.expert_mem_mb;

  std::priority_queue<HeapItem, std::vector<HeapItem>, HeapLess> heap;
  for (int e = 0; e < experts; ++e) heap.push({mean[e], e});
  for (int b = 0; b < replica_budget; ++b) {
    const HeapItem top = heap.top();
    heap.pop();
    const int e = top.expert;
    plan.replica_counts[e] += 1;
    heap.push({Rational(mean[e].num, mean[e].den * plan.replica_counts[e]), e});
  }
  for (int e = 0; e < experts; ++e)
    for (int r = 0; r < plan.replica_counts[e]; ++r)
      plan.shares.push_back(
          {e, r, Rational(mean[e].num, mean[e].den * plan.replica_counts[e])});
  return plan;
}

EplbState::EplbState(int period, int replica_budget) : period_(period), budget_(replica_budget) {
  if (period < 1) throw std::invalid_argument("eplb period must be >= 1");
  if (replica_budget < 0) throw std::invalid_argument("eplb replica budget must be >= 0");
}

void EplbState::step(const std::vector<LoadVector>& history, int layer, const ModelSpec& model,
                     const ClusterSpec& cluster, long iteration) {
  refreshed_ = false;
  if (have_plan_ && iteration % period_ != 0) return;

  // Usage window: the iterations since the previous refresh.
  std::vector<LoadVector> window;
  const std::size_t take = std::min<std::size_t>(history.size(), static_cast<std::size_t>(period_));
  window.assign(history.end() - take, history.end());

  plan_ = eplb_counts(window, layer, budget_, model);
  ReplicaRegistry empty(0);  // cold shortest-queue path, no warm starts
  placement_ = place_experts(plan_, cluster, empty, iteration).placement;
  have_plan_ = true;
  refreshed_ = true;
}

LayerMetrics oracle_balance_time(const LoadVector& actual, const ClusterSpec& cluster,
                                 const ModelSpec& model) {
  cluster.validate();
  model.validate();
  const double total = static_cast<double>(actual.total());
  LayerMetrics m;
  m.compute_ms = cluster.alpha_ms_per_token * total / cluster.gpu_count;
  m.comm_ms = cluster.beta_ms_per_token * total / cluster.gpu_count;
  m.forward_ms = m.compute_ms + 2.0 * m.comm_ms + cluster.t_misc_ms;
  m.replica_count = cluster.gpu_count;  // one replica's worth of capacity per GPU
  m.mem_mb = m.replica_count * model.expert_mem_mb;
  m.cost_mb_ms = (m.compute_ms + 2.0 * m.comm_ms) * m.mem_mb + cluster.t_misc_ms * cluster.m_misc_mb;
  return m;
}

BruteForceResult brute_force_optimal(const LoadVector& loads, const ModelSpec& model,
                                     const ClusterSpec& cluster, int max_extra_replicas) {
  model.validate();
  cluster.validate();
  const int experts = static_cast<int>(loads.loads.size());
  if (experts != model.experts_per_layer)
    throw std::invalid_argument("load vector does not match experts_per_layer");
  if (experts > 4 || cluster.gpu_count > 3 || max_extra_replicas > 4)
    throw std::invalid_argument(
        "brute force is guarded to experts <= 4, gpus <= 3, max_extra_replicas <= 4");
  if (max_extra_replicas < 0) throw std::invalid_argument("max_extra_replicas must be >= 0");

  const int gpus = cluster.gpu_count;
  BruteForceResult best;
  bool found = false;
  int best_total = 0;

  std::vector<int> extras(experts, 0);
  // Lexicographic walk over extra-replica vectors with sum <= max_extra_replicas:
  // bump the rightmost position whose prefix still leaves room, zero the tail.
  auto next_vector = [&]() {
    for (int i = experts - 1; i >= 0; --i) {
      int prefix = 0;
      for (int j = 0; j < i; ++j) prefix += extras[j];
      if (prefix + extras[i] + 1 <= max_extra_replicas) {
        ++extras[i];
        for (int j = i + 1; j < experts; ++j) extras[j] = 0;
        return true;
      }
    }
    return false;
  };

  do {
    ScalingPlan plan;
    plan.layer = loads.layer;
    plan.replica_counts.resize(experts);
    plan.expert_mem_mb = model.expert_mem_mb;
    int total_replicas = 0;
    for (int e = 0; e < experts; ++e) {
      plan.replica_counts[e] = 1 + extras[e];
      total_replicas += plan.replica_counts[e];
    }
    plan.alloc_mem_mb = (total_replicas - experts) * model.expert_mem_mb;
    plan.shares.clear();
    for (int e = 0; e < experts; ++e)
      for (int r = 0; r < plan.replica_counts[e]; ++r)
        plan.shares.push_back({e, r, Rational(loads.loads[e], plan.replica_counts[e])});

    // All GPU assignments of the flat replica list, lexicographic.
    std::vector<int> assign(total_replicas, 0);
    while (true) {
      std::vector<int> replicas_on(gpus, 0);
      for (int i = 0; i < total_replicas; ++i) ++replicas_on[assign[i]];
      bool fits = true;
      for (int g = 0; g < gpus && fits; ++g)
        if (replicas_on[g] * model.expert_mem_mb > cluster.gpu_mem_capacity_mb + 1e-9)
          fits = false;

      if (fits) {
        Placement placement;
        placement.layer = loads.layer;
        placement.gpu_for.assign(experts, {});
        placement.per_gpu_mem_mb.assign(gpus, 0.0);
        int idx = 0;
        for (int e = 0; e < experts; ++e) {
          placement.gpu_for[e].resize(plan.replica_counts[e]);
          for (int r = 0; r < plan.replica_counts[e]; ++r, ++idx) {
            placement.gpu_for[e][r] = assign[idx];
            placement.per_gpu_mem_mb[assign[idx]] += model.expert_mem_mb;
          }
        }
        const LayerMetrics m = layer_forward_time(plan, placement, loads, cluster, model);
        if (!found || m.forward_ms < best.forward_ms ||
            (m.forward_ms == best.forward_ms && total_replicas < best_total)) {
          best.plan = plan;
          best.placement = placement;
          best.forward_ms = m.forward_ms;
          best_total = total_replicas;
          found = true;
        }
      }

      int i = total_replicas - 1;
      while (i >= 0 && assign[i] == gpus - 1) assign[i--] = 0;
      if (i < 0) break;
      ++assign[i];
    }
  } while (next_vector());

  if (!found) throw std::runtime_error("no memory-feasible assignment exists");
  return best;
}

}  // namespace moeless
