// SPDX-License-Identifier: Apache-2.0

#include "moeless/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace moeless {

void ClusterSpec::validate() const {
  if (gpu_count < 1) throw std::invalid_argument("gpu_count must be >= 1");
  if (gpu_mem_capacity_mb <= 0) throw std::invalid_argument("gpu_mem_capacity_mb must be > 0");
  if (alpha_ms_per_token < 0) throw std::invalid_argument("alpha_ms_per_token must be >= 0");
  if (beta_ms_per_token < 0) throw std::invalid_argument("beta_ms_per_token must be >= 0");
  if (t_misc_ms < 0) throw std::invalid_argument("t_misc_ms must be >= 0");
  if (m_misc_mb < 0) throw std::invalid_argument("m_misc_mb must be >= 0");
}

void ModelSpec::validate() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (experts_per_layer < 1) throw std::invalid_argument("experts_per_layer must be >= 1");
  if (top_k < 1 || top_k > experts_per_layer)
    throw std::invalid_argument("top_k must be in [1, experts_per_layer]");
  if (expert_mem_mb <= 0) throw std::invalid_argument("expert_mem_mb must be > 0");
  if (layer_mem_cap_mb < 0) throw std::invalid_argument("layer_mem_cap_mb must be >= 0");
}

double replica_time(double load_share_tokens, double alpha_ms_per_token) {
  if (load_share_tokens < 0) throw std::invalid_argument("load share must be >= 0");
  if (alpha_ms_per_token < 0) throw std::invalid_argument("alpha must be >= 0");
  return alpha_ms_per_token * load_share_tokens;
}

namespace {

// Shared consistency walk: every replica of the plan must map to exactly one
// in-range GPU. Returns per-GPU accumulated share, with shares supplied by the
// caller (plan shares for placement quality, actual shares for evaluation).
template <typename ShareFn>
std::vector<double> accumulate_gpu_loads(const ScalingPlan& plan, const Placement& placement,
                                         ShareFn&& share_of) {
  const int gpus = placement.gpu_count();
  if (gpus < 1) throw std::invalid_argument("placement covers no GPUs");
  if (placement.gpu_for.size() != plan.replica_counts.size())
    throw std::invalid_argument("placement does not match plan: expert count differs");
  std::vector<double> load(gpus, 0.0);
  for (std::size_t e = 0; e < plan.replica_counts.size(); ++e) {
    const int count = plan.replica_counts[e];
    if (static_cast<int>(placement.gpu_for[e].size()) != count)
      throw std::invalid_argument("unplaced or doubly-placed replica for expert " +
                                  std::to_string(e));
    for (int r = 0; r < count; ++r) {
      const int g = placement.gpu_for[e][r];
      if (g < 0 || g >= gpus)
        throw std::invalid_argument("replica (" + std::to_string(e) + "," + std::to_string(r) +
                                    ") placed on invalid GPU " + std::to_string(g));
      load[g] += share_of(static_cast<int>(e), r);
    }
  }
  return load;
}

}  // namespace

std::vector<double> gpu_comm_times(const ScalingPlan& plan, const Placement& placement,
                                   double beta_ms_per_token) {
  if (beta_ms_per_token < 0) throw std::invalid_argument("beta must be >= 0");
  std::vector<std::vector<double>> share(plan.replica_counts.size());
  for (std::size_t e = 0; e < share.size(); ++e)
    share[e].assign(std::max(plan.replica_counts[e], 0), -1.0);
  for (const auto& s : plan.shares) {
    if (s.expert < 0 || s.expert >= static_cast<int>(share.size()) || s.ordinal < 0 ||
        s.ordinal >= static_cast<int>(share[s.expert].size()))
      throw std::invalid_argument("plan share list names replica (" + std::to_string(s.expert) +
                                  "," + std::to_string(s.ordinal) + ") outside replica_counts");
    share[s.expert][s.ordinal] = s.share.to_double();
  }
  for (std::size_t e = 0; e < share.size(); ++e)
    for (std::size_t r = 0; r < share[e].size(); ++r)
      if (share[e][r] < 0)
        throw std::invalid_argument("plan has no share for replica (" + std::to_string(e) + "," +
                                    std::to_string(r) + ")");
  auto loads = accumulate_gpu_loads(plan, placement,
                                    [&](int e, int r) { return share[e][r]; });
  for (auto& v : loads) v *= beta_ms_per_token;
  return loads;
}

LayerMetrics layer_forward_time(const ScalingPlan& plan, const Placement& placement,
                                const LoadVector& actual, const ClusterSpec& cluster,
                                const ModelSpec& model) {
  cluster.validate();
  if (actual.loads.size() != plan.replica_counts.size())
    throw std::invalid_argument("actual load vector does not match plan expert count");

  // The dispatcher splits each expert's arrived tokens evenly over replicas.
  std::vector<double> actual_share(plan.replica_counts.size(), 0.0);
  double max_share = 0.0;
  for (std::size_t e = 0; e < plan.replica_counts.size(); ++e) {
    if (plan.replica_counts[e] < 1)
      throw std::invalid_argument("expert " + std::to_string(e) + " has no replica");
    if (actual.loads[e] < 0) throw std::invalid_argument("negative actual load");
    actual_share[e] = static_cast<double>(actual.loads[e]) / plan.replica_counts[e];
    max_share = std::max(max_share, actual_share[e]);
  }

  const auto gpu_loads = accumulate_gpu_loads(plan, placement,
                                              [&](int e, int) { return actual_share[e]; });
  double max_gpu = 0.0;
  for (double v : gpu_loads) max_gpu = std::max(max_gpu, v);

  LayerMetrics m;
  m.compute_ms = cluster.alpha_ms_per_token * max_share;
  m.comm_ms = cluster.beta_ms_per_token * max_gpu;
  m.forward_ms = m.compute_ms + 2.0 * m.comm_ms + cluster.t_misc_ms;
  m.replica_count = plan.total_replicas();
  m.mem_mb = m.replica_count * model.expert_mem_mb;
  m.cost_mb_ms = (m.compute_ms + 2.0 * m.comm_ms) * m.mem_mb + cluster.t_misc_ms * cluster.m_misc_mb;
  return m;
}

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("CV of an empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / values.size();
  if (mean == 0.0) return 0.0;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / values.size()) / mean;
}

double serverful_cost(double total_ms, const ModelSpec& model, const ClusterSpec& cluster) {
  const double resident_mb =
      static_cast<double>(model.experts_per_layer) * model.num_layers * model.expert_mem_mb +
      cluster.m_misc_mb;
  return resident_mb * total_ms;
}

}  // namespace moeless
