// SPDX-License-Identifier: Apache-2.0

#include "moeless/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>

#include "moeless/cost_model.hpp"
#include "moeless/report.hpp"

namespace moeless {

void SimConfig::validate() const {
  cluster.validate();
  model.validate();
  if (workload.zipf_exponent < 0) throw std::invalid_argument("zipf_exponent must be >= 0");
  if (workload.drift_period < 0) throw std::invalid_argument("drift_period_iters must be >= 0");
  if (policy == Policy::moeless || policy == Policy::static_ep)
    predictor.validate(model.num_layers);
  if (policy == Policy::moeless && predictor.distance >= model.num_layers)
    throw std::invalid_argument("prediction_distance must be below num_layers");
  if (eplb_period < 1) throw std::invalid_argument("eplb_period_iters must be >= 1");
  if (keep_alive_iters < 0) throw std::invalid_argument("keep_alive_iters must be >= 0");
  if (cold_start_ms < 0) throw std::invalid_argument("cold_start_ms must be >= 0");
  if (scaler.cv_threshold < 0) throw std::invalid_argument("cv_threshold must be >= 0");
}

namespace {

Placement round_robin_placement(const ScalingPlan& plan, const ClusterSpec& cluster) {
  Placement p;
  p.layer = plan.layer;
  p.gpu_for.assign(plan.replica_counts.size(), {});
  p.per_gpu_mem_mb.assign(cluster.gpu_count, 0.0);
  int flat = 0;
  for (std::size_t e = 0; e < plan.replica_counts.size(); ++e) {
    p.gpu_for[e].resize(plan.replica_counts[e]);
    for (int r = 0; r < plan.replica_counts[e]; ++r, ++flat) {
      const int g = flat % cluster.gpu_count;
      p.gpu_for[e][r] = g;
      p.per_gpu_mem_mb[g] += plan.expert_mem_mb;
    }
  }
  for (int g = 0; g < cluster.gpu_count; ++g)
    if (p.per_gpu_mem_mb[g] > cluster.gpu_mem_capacity_mb + 1e-9)
      throw std::runtime_error("round-robin placement does not fit GPU " + std::to_string(g));
  return p;
}

struct LayerState {
  std::vector<LoadVector> history;
  // moeless plan persistence and accuracy bookkeeping
  bool have_plan = false;
  ScalingPlan plan;
  Placement placement;
  LoadVector last_predicted;
};

struct Accumulator {
  std::vector<double> replica_sum;
  std::vector<double> accuracy_sum;
  std::vector<long> accuracy_n;
  std::vector<long> bootstrap;
  long warm = 0, cold = 0;
};

}  // namespace

MetricsReport run(const SimConfig& config, const std::vector<Request>& trace,
                  bool capture_debug) {
  config.validate();
  const int L = config.model.num_layers;
  const int E = config.model.experts_per_layer;
  const auto batches = batch_requests(trace);
  const auto profile = make_popularity_profile(
      E, L, config.workload.zipf_exponent, config.seed, config.workload.shared_permutation,
      config.workload.drift_period, config.workload.zipf_exponent_decode);

  MetricsReport report;
  report.policy = policy_name(config.policy);
  report.iterations = static_cast<long>(batches.size());
  report.num_layers = L;
  report.layer_mean_replicas.assign(L, 0.0);
  report.layer_mean_accuracy.assign(L, 0.0);
  report.layer_bootstrap_uses.assign(L, 0);

  std::vector<LayerState> layers(L);
  ReplicaRegistry registry(config.keep_alive_iters);
  std::vector<EplbState> eplb;
  if (config.policy == Policy::eplb) {
    const int budget =
        config.eplb_replica_budget < 0 ? config.cluster.gpu_count : config.eplb_replica_budget;
    eplb.assign(L, EplbState(config.eplb_period, budget));
  }
  PredictorProfile bootstrap_profile = config.predictor;
  bootstrap_profile.kind = PredictorKind::historical;

  Accumulator acc;
  acc.replica_sum.assign(L, 0.0);
  acc.accuracy_sum.assign(L, 0.0);
  acc.accuracy_n.assign(L, 0);
  acc.bootstrap.assign(L, 0);

  const std::size_t history_cap = static_cast<std::size_t>(std::max(
      {config.predictor.history_window,
       config.policy == Policy::eplb ? config.eplb_period : 0, 1})) + 2;

  std::vector<double> forwards;
  forwards.reserve(batches.size() * static_cast<std::size_t>(L));

  for (const auto& batch : batches) {
    // Ground truth for every layer of this iteration.
    std::vector<LoadVector> actual(L);
    for (int l = 0; l < L; ++l)
      actual[l] = route_tokens(batch, l, profile, config.model.top_k, E, config.seed);

    for (int l = 0; l < L; ++l) {
      LayerState& st = layers[l];
      double forward_ms = 0.0;
      double cost_mb_ms = 0.0;
      int replicas = 0, warm = 0, cold = 0;

      try {
        switch (config.policy) {
          case Policy::moeless:
          case Policy::static_ep: {
            ScalingPlan plan;
            Placement placement;
            LoadVector predicted;
            bool reused = false;

            if (config.policy == Policy::static_ep) {
              auto sp = static_plan(actual[l], config.model, config.cluster);
              plan = std::move(sp.first);
              placement = std::move(sp.second);
              predicted = actual[l];  // no prediction step; plan is load-independent
            } else if (config.persist_plans && batch.phase == Phase::decode && st.have_plan) {
              plan = st.plan;
              placement = st.placement;
              predicted = st.last_predicted;
              reused = true;
            } else {
              bool fallback = false;
              if (l < config.predictor.distance) {
                // The plan for this layer had to be made before the iteration
                // reached any layer the predictor could launch from.
                predicted = predict(actual[l], st.history, bootstrap_profile, batch.iteration,
                                    config.seed, {}, &fallback);
                ++acc.bootstrap[l];
              } else {
                predicted = predict(actual[l], st.history, config.predictor, batch.iteration,
                                    config.seed,
                                    popularity_weights(profile, l, batch.iteration, batch.phase),
                                    &fallback);
                if (fallback) ++acc.bootstrap[l];
              }
              plan = scale_experts(predicted, config.model, config.scaler);
            }

            if (config.policy == Policy::moeless && !reused) {
              if (config.placement == PlacementMode::static_rr) {
                placement = round_robin_placement(plan, config.cluster);
                int live = 0;
                for (std::size_t e = 0; e < placement.gpu_for.size(); ++e)
                  for (std::size_t r = 0; r < placement.gpu_for[e].size(); ++r)
                    if (registry.lookup(l, static_cast<int>(e), static_cast<int>(r),
                                        batch.iteration) == placement.gpu_for[e][r])
                      ++live;
                warm = live;
                cold = plan.total_replicas() - live;
              } else {
                auto pr = place_experts(plan, config.cluster, registry, batch.iteration,
                                        config.placer);
                placement = std::move(pr.placement);
                warm = pr.warm_count;
                cold = pr.cold_count;
              }
            } else if (config.policy == Policy::static_ep) {
              int live = 0;
              for (std::size_t e = 0; e < placement.gpu_for.size(); ++e)
                if (registry.lookup(l, static_cast<int>(e), 0, batch.iteration) ==
                    placement.gpu_for[e][0])
                  ++live;
              warm = live;
              cold = plan.total_replicas() - live;
            } else {  // reused persisted plan: replicas stayed instantiated
              warm = plan.total_replicas();
              cold = 0;
            }

            const LayerMetrics m =
                layer_forward_time(plan, placement, actual[l], config.cluster, config.model);
            forward_ms = m.forward_ms;
            cost_mb_ms = m.cost_mb_ms;
            replicas = m.replica_count;
            if (config.policy == Policy::moeless && config.predictor.distance == 0 && cold > 0)
              forward_ms += config.cold_start_ms;  // synchronous planning cannot pre-warm

            update_registry(registry, placement, batch.iteration);
            if (config.policy == Policy::moeless) {
              acc.accuracy_sum[l] += measure_accuracy(predicted, actual[l]);
              ++acc.accuracy_n[l];
              st.plan = plan;
              st.placement = placement;
              st.last_predicted = predicted;
              st.have_plan = true;
            }
            break;
          }
          case Policy::eplb: {
            eplb[l].step(st.history, l, config.model, config.cluster, batch.iteration);
            const LayerMetrics m = layer_forward_time(eplb[l].plan(), eplb[l].placement(),
                                                      actual[l], config.cluster, config.model);
            forward_ms = m.forward_ms;
            cost_mb_ms = m.cost_mb_ms;
            replicas = m.replica_count;
            if (eplb[l].refreshed_last_step()) {
              cold = replicas;
            } else {
              warm = replicas;
            }
            break;
          }
          case Policy::oracle_balance: {
            const LayerMetrics m = oracle_balance_time(actual[l], config.cluster, config.model);
            forward_ms = m.forward_ms;
            cost_mb_ms = m.cost_mb_ms;
            replicas = m.replica_count;
            warm = replicas;
            break;
          }
        }
      } catch (const std::exception& e) {
        throw std::runtime_error("iteration " + std::to_string(batch.iteration) + ", layer " +
                                 std::to_string(l) + ": " + e.what());
      }

      report.total_ms += forward_ms;
      report.cost_mb_ms += cost_mb_ms;
      acc.replica_sum[l] += replicas;
      acc.warm += warm;
      acc.cold += cold;
      forwards.push_back(forward_ms);
      report.samples.push_back({batch.iteration, l, forward_ms, replicas, warm, cold});
      if (capture_debug) {
        report.debug.actual.push_back(actual[l]);
        report.debug.predicted.push_back(config.policy == Policy::moeless ? layers[l].last_predicted
                                                                          : actual[l]);
        std::vector<int> counts;
        if (config.policy == Policy::moeless) counts = layers[l].plan.replica_counts;
        report.debug.replica_counts.push_back(counts);
      }
    }

    for (int l = 0; l < L; ++l) {
      layers[l].history.push_back(actual[l]);
      if (layers[l].history.size() > history_cap)
        layers[l].history.erase(layers[l].history.begin());
    }
  }

  const long n = static_cast<long>(forwards.size());
  if (n > 0) {
    report.mean_forward_ms = report.total_ms / n;
    report.p50_forward_ms = percentile(forwards, 0.50);
    report.p95_forward_ms = percentile(forwards, 0.95);
    report.p99_forward_ms = percentile(forwards, 0.99);
  }
  double replica_mean = 0.0;
  for (int l = 0; l < L; ++l) {
    report.layer_mean_replicas[l] =
        report.iterations > 0 ? acc.replica_sum[l] / report.iterations : 0.0;
    replica_mean += report.layer_mean_replicas[l];
    report.layer_mean_accuracy[l] =
        acc.accuracy_n[l] > 0 ? acc.accuracy_sum[l] / acc.accuracy_n[l] : 0.0;
    report.layer_bootstrap_uses[l] = acc.bootstrap[l];
  }
  report.mean_replicas_per_layer = L > 0 ? replica_mean / L : 0.0;
  report.warm_total = acc.warm;
  report.cold_total = acc.cold;
  report.cost_serverful_mb_ms = serverful_cost(report.total_ms, config.model, config.cluster);
  return report;
}

ComparisonReport run_comparison(const std::vector<SimConfig>& configs,
                                const std::vector<Request>& trace) {
  if (configs.empty()) throw std::invalid_argument("no configurations to compare");
  for (const auto& c : configs) {
    if (c.seed != configs[0].seed)
      throw std::invalid_argument("comparison requires a shared seed");
    if (c.model.num_layers != configs[0].model.num_layers ||
        c.model.experts_per_layer != configs[0].model.experts_per_layer ||
        c.model.top_k != configs[0].model.top_k)
      throw std::invalid_argument("comparison requires a shared model shape");
    if (c.workload.zipf_exponent != configs[0].workload.zipf_exponent ||
        c.workload.drift_period != configs[0].workload.drift_period)
      throw std::invalid_argument("comparison requires a shared workload");
  }

  ComparisonReport out;
  std::vector<std::future<MetricsReport>> futures;
  futures.reserve(configs.size());
  for (const auto& c : configs)
    futures.push_back(std::async(std::launch::async, [&c, &trace] { return run(c, trace); }));
  for (auto& f : futures) out.runs.push_back(f.get());

  for (const auto& a : out.runs)
    for (const auto& b : out.runs) {
      if (&a == &b || b.mean_forward_ms == 0.0) continue;
      out.mean_forward_ratio[a.policy + "_vs_" + b.policy] = a.mean_forward_ms / b.mean_forward_ms;
    }
  return out;
}

std::vector<SweepRow> sweep(const SimConfig& base, SweepParam param, double from, double to,
                            double step, const std::vector<Request>& trace) {
  if (step <= 0) throw std::invalid_argument("sweep step must be > 0");
  if (to < from) throw std::invalid_argument("sweep range is empty");

  std::vector<SimConfig> points;
  for (double v = from; v <= to + 1e-9; v += step) {
    SimConfig c = base;
    if (param == SweepParam::cv_threshold) {
      c.scaler.cv_threshold = v;
    } else {
      const int d = static_cast<int>(std::lround(v));
      if (std::abs(v - d) > 1e-9)
        throw std::invalid_argument("distance sweep requires integer grid points");
      c.predictor.distance = d;
    }
    points.push_back(std::move(c));
  }

  std::vector<std::future<MetricsReport>> futures;
  futures.reserve(points.size());
  for (const auto& c : points)
    futures.push_back(std::async(std::launch::async, [&c, &trace] { return run(c, trace); }));

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const MetricsReport r = futures[i].get();
    const double value = param == SweepParam::cv_threshold
                             ? points[i].scaler.cv_threshold
                             : static_cast<double>(points[i].predictor.distance);
    rows.push_back({value, r.mean_forward_ms, r.mean_replicas_per_layer, r.total_ms});
  }
  return rows;
}

}  // namespace moeless
