// SPDX-License-Identifier: Apache-2.0

#include "moeless/placer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace moeless {

ReplicaRegistry::ReplicaRegistry(int keep_alive_iters) : keep_alive_iters_(keep_alive_iters) {
  if (keep_alive_iters < 0) throw std::invalid_argument("keep_alive_iters must be >= 0");
}

std::optional<int> ReplicaRegistry::lookup(int layer, int expert, int ordinal,
                                           long iteration) const {
  const auto it = entries_.find({layer, expert, ordinal});
  if (it == entries_.end()) return std::nullopt;
  if (iteration - it->second.last_used > keep_alive_iters_) return std::nullopt;
  return it->second.gpu;
}

void ReplicaRegistry::record(int layer, int expert, int ordinal, int gpu, long iteration) {
  entries_[{layer, expert, ordinal}] = Entry{gpu, iteration};
}

void ReplicaRegistry::retire(int layer, const Placement& placement, long iteration) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    const auto& [l, e, r] = it->first;
    if (l != layer) {
      ++it;
      continue;
    }
    const bool scaled_down =
        e >= static_cast<int>(placement.gpu_for.size()) ||
        r >= static_cast<int>(placement.gpu_for[e].size());
    const bool stale = iteration - it->second.last_used > keep_alive_iters_;
    if (scaled_down || stale)
      it = entries_.erase(it);
    else
      ++it;
  }
}

PlaceResult place_experts(const ScalingPlan& plan, const ClusterSpec& cluster,
                          const ReplicaRegistry& registry, long iteration,
                          const PlacerOptions& options) {
  cluster.validate();
  const int gpus = cluster.gpu_count;
  const int experts = static_cast<int>(plan.replica_counts.size());
  if (experts == 0) throw std::invalid_argument("plan covers no experts");
  if (plan.total_replicas() * plan.expert_mem_mb >
      gpus * cluster.gpu_mem_capacity_mb + 1e-9)
    throw std::runtime_error("plan memory exceeds aggregate cluster capacity for layer " +
                             std::to_string(plan.layer));

  PlaceResult result;
  result.placement.layer = plan.layer;
  result.placement.gpu_for.assign(experts, {});
  for (int e = 0; e < experts; ++e) result.placement.gpu_for[e].assign(plan.replica_counts[e], -1);
  result.placement.per_gpu_mem_mb.assign(gpus, 0.0);

  // Largest predicted share first; ties by expert then ordinal so the order,
  // and with it the whole placement, is reproducible.
  std::vector<ReplicaShare> order = plan.shares;
  std::sort(order.begin(), order.end(), [](const ReplicaShare& a, const ReplicaShare& b) {
    if (a.share != b.share) return b.share < a.share;
    if (a.expert != b.expert) return a.expert < b.expert;
    return a.ordinal < b.ordinal;
  });

  std::vector<double> queue_ms(gpus, 0.0);
  const double mem_per_replica = plan.expert_mem_mb;

  for (const auto& rep : order) {
    const double share = rep.share.to_double();
    const double queue_add = options.beta_ms_per_token * share +
                             (options.load_includes_compute
                                  ? options.alpha_ms_per_token * share
                                  : 0.0);
    int chosen = -1;
    bool warm = false;

    if (const auto prior = registry.lookup(plan.layer, rep.expert, rep.ordinal, iteration)) {
      const int g = *prior;
      if (g >= 0 && g < gpus &&
          result.placement.per_gpu_mem_mb[g] + mem_per_replica <=
              cluster.gpu_mem_capacity_mb + 1e-9) {
        chosen = g;
        warm = true;
      }
    }
    if (chosen < 0) {
      for (int g = 0; g < gpus; ++g) {
        if (result.placement.per_gpu_mem_mb[g] + mem_per_replica >
            cluster.gpu_mem_capacity_mb + 1e-9)
          continue;
        if (chosen < 0 || queue_ms[g] < queue_ms[chosen]) chosen = g;
      }
      if (chosen < 0)
        throw std::runtime_error("no GPU has memory for replica (" +
                                 std::to_string(rep.expert) + "," +
                                 std::to_string(rep.ordinal) + ") of layer " +
                                 std::to_string(plan.layer));
    }

    result.placement.gpu_for[rep.expert][rep.ordinal] = chosen;
    result.placement.per_gpu_mem_mb[chosen] += mem_per_replica;
    queue_ms[chosen] += queue_add;
    if (warm)
      ++result.warm_count;
    else
      ++result.cold_count;
  }

  for (int e = 0; e < experts; ++e)
    for (int r = 0; r < plan.replica_counts[e]; ++r)
      if (result.placement.gpu_for[e][r] < 0)
        throw std::runtime_error("plan share list misses replica (" + std::to_string(e) + "," +
                                 std::to_string(r) + ")");
  return result;
}

void update_registry(ReplicaRegistry& registry, const Placement& placement, long iteration) {
  for (std::size_t e = 0; e < placement.gpu_for.size(); ++e)
    for (std::size_t r = 0; r < placement.gpu_for[e].size(); ++r)
      registry.record(placement.layer, static_cast<int>(e), static_cast<int>(r),
                      placement.gpu_for[e][r], iteration);
  registry.retire(placement.layer, placement, iteration);
}

}  // namespace moeless
