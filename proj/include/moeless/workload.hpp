// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moeless/types.hpp"

namespace moeless {

struct Request {
  std::int64_t arrival_ms = 0;
  int prompt_tokens = 1;   // >= 1
  int output_tokens = 0;   // >= 0
};

enum class Phase { prefill, decode };

// One model iteration: a prefill over a second's aggregated prompts, or one
// decode step of the sequences that second admitted.
struct IterationBatch {
  long iteration = 0;      // global index in the schedule
  Phase phase = Phase::prefill;
  std::int64_t token_count = 0;
};

// Per-layer popularity of experts: rank j carries weight 1/(j+1)^s and the
// permutation maps ranks to expert ids. Optional drift re-permutes every
// drift_period iterations; optional distinct exponent for decode batches.
struct PopularityProfile {
  std::vector<std::vector<int>> rank_to_expert;  // [layer][rank] -> expert
  double zipf_exponent = 1.2;
  double zipf_exponent_decode = -1.0;  // < 0: same as prefill
  int drift_period = 0;                // 0 = stationary
  std::uint64_t perm_seed = 0;

  int num_layers() const { return static_cast<int>(rank_to_expert.size()); }
  int num_experts() const { return rank_to_expert.empty() ? 0 : static_cast<int>(rank_to_expert[0].size()); }
  double exponent_for(Phase phase) const {
    return (phase == Phase::decode && zipf_exponent_decode >= 0.0) ? zipf_exponent_decode
                                                                   : zipf_exponent;
  }
};

PopularityProfile make_popularity_profile(int experts, int layers, double zipf_exponent,
                                          std::uint64_t seed, bool shared_permutation = false,
                                          int drift_period = 0,
                                          double zipf_exponent_decode = -1.0);

// Effective rank->expert permutation for one layer at one iteration (identity
// to the base permutation until the first drift epoch).
std::vector<int> effective_permutation(const PopularityProfile& profile, int layer,
                                       long iteration);

// Per-expert routing probabilities for one layer at one iteration.
std::vector<double> popularity_weights(const PopularityProfile& profile, int layer,
                                       long iteration, Phase phase);

// Line-oriented trace: three integer columns per line (arrival_ms,
// prompt_tokens, output_tokens), whitespace- or comma-separated; blank lines
// and '#' comments are skipped. Result is sorted by arrival (stable on ties).
// Malformed input throws with the 1-based line number.
std::vector<Request> parse_trace(const std::string& path);

void write_trace(const std::string& path, const std::vector<Request>& requests);

struct TokenDistParams {
  double arrival_rate_per_s = 20.0;
  double prompt_log_mean = 4.0;    // ln-space mean; median exp(4) ~ 55 tokens
  double prompt_log_sigma = 0.6;
  double output_log_mean = 2.6;    // median ~ 13 output tokens
  double output_log_sigma = 0.4;
};

// Poisson arrivals, log-normal token counts, fully determined by the seed.
std::vector<Request> gen_synthetic_trace(int count, const TokenDistParams& params,
                                         std::uint64_t seed);

// Aggregates all requests arriving within the same wall-clock second into one
// prefill batch, followed by one decode batch per output position whose token
// count is the number of sequences still generating. Batches run to completion
// in arrival order; iteration indices are global and consecutive.
std::vector<IterationBatch> batch_requests(const std::vector<Request>& requests);

// Routes batch.token_count tokens through one layer: each token picks top_k
// distinct experts from the layer's popularity distribution. The stream is
// keyed by (seed, iteration, layer); loads sum to token_count * top_k.
LoadVector route_tokens(const IterationBatch& batch, int layer,
                        const PopularityProfile& profile, int top_k, int experts,
                        std::uint64_t seed);

}  // namespace moeless
