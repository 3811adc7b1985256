// SPDX-License-Identifier: Apache-2.0

#include "moeless/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "moeless/rng.hpp"

namespace moeless {

namespace {
constexpr std::uint64_t kNoiseTag = 0x6e6f697379ULL;
}

double PredictorProfile::effective_accuracy(int layer) const {
  if (layer < 0 || layer >= static_cast<int>(per_layer_accuracy.size()))
    throw std::invalid_argument("layer outside accuracy profile");
  const double decayed =
      per_layer_accuracy[layer] - distance_decay * std::max(0, distance - 1);
  return std::clamp(decayed, 0.0, 1.0);
}

void PredictorProfile::validate(int num_layers) const {
  if (distance < 0) throw std::invalid_argument("prediction distance must be >= 0");
  if (kind != PredictorKind::historical) {
    if (static_cast<int>(per_layer_accuracy.size()) != num_layers)
      throw std::invalid_argument("accuracy profile must list one value per layer");
    for (double a : per_layer_accuracy)
      if (a < 0.0 || a > 1.0)
        throw std::invalid_argument("per-layer accuracy must be in [0, 1]");
  }
  if (accuracy_threshold < 0.0 || accuracy_threshold > 1.0)
    throw std::invalid_argument("accuracy_threshold must be in [0, 1]");
  if (distance_decay < 0.0) throw std::invalid_argument("distance_decay must be >= 0");
  if (history_window < 1) throw std::invalid_argument("history_window must be >= 1");
}

PredictorProfile make_ramp_profile(int num_layers, double first, double last) {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  PredictorProfile p;
  p.per_layer_accuracy.resize(num_layers);
  p.fine_tuned.assign(num_layers, false);
  for (int l = 0; l < num_layers; ++l) {
    const double t = num_layers == 1 ? 0.0 : static_cast<double>(l) / (num_layers - 1);
    p.per_layer_accuracy[l] = first + (last - first) * t;
  }
  return p;
}

namespace {

LoadVector predict_noisy(const LoadVector& actual, double accuracy, long iteration,
                         std::uint64_t seed, const std::vector<double>& popularity) {
  const int experts = static_cast<int>(actual.loads.size());
  std::vector<double> weights = popularity;
  if (weights.empty()) weights.assign(experts, 1.0 / experts);
  if (static_cast<int>(weights.size()) != experts)
    throw std::invalid_argument("popularity weights do not match expert count");

  std::vector<double> cum(experts, 0.0);
  double norm = 0.0;
  for (int e = 0; e < experts; ++e) {
    if (weights[e] < 0) throw std::invalid_argument("negative popularity weight");
    norm += weights[e];
    cum[e] = norm;
  }
  if (norm <= 0) throw std::invalid_argument("popularity weights sum to zero");

  auto eng = keyed_engine(seed, static_cast<std::uint64_t>(iteration),
                          static_cast<std::uint64_t>(actual.layer), kNoiseTag);
  LoadVector out;
  out.layer = actual.layer;
  out.loads.assign(experts, 0);
  // Token-level noise: a token stays put with probability a, otherwise it is
  // re-drawn from the layer's popularity. Totals are preserved exactly.
  for (int e = 0; e < experts; ++e) {
    for (std::int64_t t = 0; t < actual.loads[e]; ++t) {
      if (uniform01(eng) < accuracy) {
        ++out.loads[e];
      } else {
        const double u = uniform01(eng) * norm;
        const int dst = static_cast<int>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        ++out.loads[std::min(dst, experts - 1)];
      }
    }
  }
  return out;
}

LoadVector predict_historical(std::int64_t target_total, int layer, int experts,
                              const std::vector<LoadVector>& history, int window,
                              bool* bootstrap_fallback) {
  LoadVector out;
  out.layer = layer;
  out.loads.assign(experts, 0);
  const int used = std::min<int>(window, static_cast<int>(history.size()));
  if (used == 0) {
    if (bootstrap_fallback) *bootstrap_fallback = true;
    // No signal yet: spread the known batch total uniformly.
    for (int e = 0; e < experts; ++e)
      out.loads[e] = target_total / experts + (e < target_total % experts ? 1 : 0);
    return out;
  }
  std::vector<double> mean(experts, 0.0);
  double mean_total = 0.0;
  for (int i = 0; i < used; ++i) {
    const auto& h = history[history.size() - 1 - i];
    if (static_cast<int>(h.loads.size()) != experts)
      throw std::invalid_argument("history vector has wrong expert count");
    for (int e = 0; e < experts; ++e) mean[e] += static_cast<double>(h.loads[e]);
  }
  for (int e = 0; e < experts; ++e) {
    mean[e] /= used;
    mean_total += mean[e];
  }
  if (mean_total <= 0.0) {
    if (bootstrap_fallback) *bootstrap_fallback = true;
    for (int e = 0; e < experts; ++e)
      out.loads[e] = target_total / experts + (e < target_total % experts ? 1 : 0);
    return out;
  }
  // Rescale the mean shape to the known total of the incoming batch; largest
  // remainders absorb the rounding so the total is exact.
  std::vector<std::pair<double, int>> rem(experts);
  std::int64_t assigned = 0;
  for (int e = 0; e < experts; ++e) {
    const double exact = mean[e] / mean_total * static_cast<double>(target_total);
    out.loads[e] = static_cast<std::int64_t>(exact);
    assigned += out.loads[e];
    rem[e] = {exact - static_cast<double>(out.loads[e]), e};
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::int64_t i = 0; i < target_total - assigned; ++i)
    ++out.loads[rem[static_cast<std::size_t>(i) % rem.size()].second];
  return out;
}

}  // namespace

LoadVector predict(const LoadVector& actual_future, const std::vector<LoadVector>& history,
                   const PredictorProfile& profile, long iteration, std::uint64_t seed,
                   const std::vector<double>& popularity, bool* bootstrap_fallback) {
  if (bootstrap_fallback) *bootstrap_fallback = false;
  if (actual_future.loads.empty()) throw std::invalid_argument("empty load vector");
  for (auto v : actual_future.loads)
    if (v < 0) throw std::invalid_argument("negative load");

  switch (profile.kind) {
    case PredictorKind::oracle:
      return actual_future;
    case PredictorKind::noisy:
      return predict_noisy(actual_future, profile.effective_accuracy(actual_future.layer),
                           iteration, seed, popularity);
    case PredictorKind::historical:
      return predict_historical(actual_future.total(), actual_future.layer,
                                static_cast<int>(actual_future.loads.size()), history,
                                profile.history_window, bootstrap_fallback);
  }
  throw std::logic_error("unknown predictor kind");
}

double measure_accuracy(const LoadVector& predicted, const LoadVector& actual) {
  if (predicted.loads.size() != actual.loads.size())
    throw std::invalid_argument("vectors differ in expert count");
  long double actual_total = 0.0L, predicted_total = 0.0L;
  for (std::size_t e = 0; e < actual.loads.size(); ++e) {
    if (predicted.loads[e] < 0 || actual.loads[e] < 0)
      throw std::invalid_argument("negative load");
    actual_total += actual.loads[e];
    predicted_total += predicted.loads[e];
  }
  if (actual_total == 0.0L) return predicted_total == 0.0L ? 1.0 : 0.0;
  if (predicted_total == 0.0L) return 0.0;
  const long double scale = actual_total / predicted_total;
  long double overlap = 0.0L;
  for (std::size_t e = 0; e < actual.loads.size(); ++e)
    overlap += std::min<long double>(predicted.loads[e] * scale,
                                     static_cast<long double>(actual.loads[e]));
  return static_cast<double>(overlap / actual_total);
}

void apply_layer_aware_finetuning(PredictorProfile& profile) {
  if (profile.kind != PredictorKind::noisy)
    throw std::invalid_argument("fine-tuning applies to the noisy predictor only");
  if (profile.fine_tuned.size() != profile.per_layer_accuracy.size())
    profile.fine_tuned.assign(profile.per_layer_accuracy.size(), false);
  for (std::size_t l = 0; l < profile.per_layer_accuracy.size(); ++l) {
    if (profile.per_layer_accuracy[l] < profile.accuracy_threshold) {
      profile.per_layer_accuracy[l] = profile.accuracy_threshold;
      profile.fine_tuned[l] = true;
    }
  }
}

}  // namespace moeless
