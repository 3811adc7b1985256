// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "moeless/types.hpp"

namespace moeless {

enum class PredictorKind { oracle, noisy, historical };

struct PredictorProfile {
  PredictorKind kind = PredictorKind::noisy;
  int distance = 1;                        // layers ahead; 0 = synchronous (plan after gating)
  std::vector<double> per_layer_accuracy;  // a_l in [0,1], indexed by target layer
  double accuracy_threshold = 0.8;         // fine-tuning floor h
  double distance_decay = 0.04;            // accuracy lost per layer of distance past 1
  int history_window = 8;
  std::vector<bool> fine_tuned;            // set by apply_layer_aware_finetuning

  // Accuracy at the configured distance: clamp(a_l - decay * max(0, d - 1)).
  double effective_accuracy(int layer) const;

  void validate(int num_layers) const;
};

// Linear per-layer accuracy ramp from `first` (layer 0) to `last`.
PredictorProfile make_ramp_profile(int num_layers, double first, double last);

// Predicted load vector for the target layer of one iteration.
//   oracle:     the actual future vector.
//   noisy:      every routed token keeps its true expert with probability a_l,
//               otherwise it is reassigned by the layer's popularity weights
//               (uniform when none given). Total is preserved.
//   historical: mean of the last history_window vectors, rescaled to the known
//               batch total. Reads nothing of the future vector but its total.
//               Empty history falls back to uniform; *bootstrap_fallback set.
LoadVector predict(const LoadVector& actual_future, const std::vector<LoadVector>& history,
                   const PredictorProfile& profile, long iteration, std::uint64_t seed,
                   const std::vector<double>& popularity = {},
                   bool* bootstrap_fallback = nullptr);

// Load-overlap coefficient: sum_e min(pred, actual) / sum_e actual, with the
// prediction rescaled to the actual total first. Both vectors all-zero -> 1;
// actual all-zero otherwise -> 0.
double measure_accuracy(const LoadVector& predicted, const LoadVector& actual);

// Raises every layer with accuracy below the threshold to the threshold and
// flags it; models selective fine-tuning of weak layers. Noisy profiles only.
void apply_layer_aware_finetuning(PredictorProfile& profile);

}  // namespace moeless
