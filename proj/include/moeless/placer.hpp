// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "moeless/types.hpp"

namespace moeless {

// GPU assignment for every replica of one layer's plan.
struct Placement {
  int layer = 0;
  std::vector<std::vector<int>> gpu_for;   // [expert][ordinal] -> gpu
  std::vector<double> per_gpu_mem_mb;      // replica memory this layer puts on each GPU

  int gpu_count() const { return static_cast<int>(per_gpu_mem_mb.size()); }
};

struct PlaceResult {
  Placement placement;
  int warm_count = 0;  // replicas reusing a live prior instantiation
  int cold_count = 0;  // replicas instantiated fresh
};

struct PlacerOptions {
  // When set, the queue length used for shortest-queue selection also counts
  // compute (alpha-weighted), not just transfer load. Off by default: the
  // exchange is the per-GPU contended resource in the cost model.
  bool load_includes_compute = false;
  double alpha_ms_per_token = 0.0;
  double beta_ms_per_token = 1.0;
};

// Keep-alive registry of live replica instantiations. An entry is live while
// (iteration - last_used) <= keep_alive_iters; older entries are treated as
// released and are swept on update.
class ReplicaRegistry {
 public:
  struct Entry {
    int gpu = 0;
    long last_used = 0;
  };

  explicit ReplicaRegistry(int keep_alive_iters = 0);

  int keep_alive_iters() const { return keep_alive_iters_; }

  // GPU of a live entry, or nullopt when absent or past keep-alive.
  std::optional<int> lookup(int layer, int expert, int ordinal, long iteration) const;

  void record(int layer, int expert, int ordinal, int gpu, long iteration);

  // Drops entries of `layer` whose ordinal is at or past the expert's replica
  // count in `placement` (scale-downs), then sweeps stale entries of the layer.
  void retire(int layer, const Placement& placement, long iteration);

  std::size_t size() const { return entries_.size(); }

 private:
  int keep_alive_iters_;
  std::map<std::tuple<int, int, int>, Entry> entries_;  // (layer, expert, ordinal)
};

// Assigns every replica of the plan to a GPU. Replicas are processed in
// non-increasing share order (ties: lowest expert, then lowest ordinal). A
// replica that is still live in the registry warm-starts on its recorded GPU
// if that GPU has memory left for this layer; everything else goes to the
// least-loaded GPU with free memory (ties: lowest GPU index) and counts cold.
// Throws when some replica fits on no GPU, naming the replica.
PlaceResult place_experts(const ScalingPlan& plan, const ClusterSpec& cluster,
                          const ReplicaRegistry& registry, long iteration,
                          const PlacerOptions& options = {});

// Records all replicas of `placement` as used at `iteration` and retires
// scaled-down or stale entries of the same layer.
void update_registry(ReplicaRegistry& registry, const Placement& placement, long iteration);

}  // namespace moeless
