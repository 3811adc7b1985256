// SPDX-License-Identifier: Apache-2.0

#include "moeless/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "moeless/rng.hpp"

namespace moeless {

namespace {

constexpr std::uint64_t kRouteTag = 0x726f757465ULL;   // token routing streams
constexpr std::uint64_t kDriftTag = 0x7065726dULL;     // drift re-permutation streams

void check_request(const Request& r, const std::string& where) {
  if (r.arrival_ms < 0) throw std::invalid_argument(where + ": arrival_ms must be >= 0");
  if (r.prompt_tokens < 1) throw std::invalid_argument(where + ": prompt_tokens must be >= 1");
  if (r.output_tokens < 0) throw std::invalid_argument(where + ": output_tokens must be >= 0");
}

}  // namespace

PopularityProfile make_popularity_profile(int experts, int layers, double zipf_exponent,
                                          std::uint64_t seed, bool shared_permutation,
                                          int drift_period, double zipf_exponent_decode) {
  if (experts < 1) throw std::invalid_argument("experts must be >= 1");
  if (layers < 1) throw std::invalid_argument("layers must be >= 1");
  if (zipf_exponent < 0) throw std::invalid_argument("zipf exponent must be >= 0");
  if (drift_period < 0) throw std::invalid_argument("drift_period must be >= 0");

  PopularityProfile p;
  p.zipf_exponent = zipf_exponent;
  p.zipf_exponent_decode = zipf_exponent_decode;
  p.drift_period = drift_period;
  p.perm_seed = seed;
  p.rank_to_expert.resize(layers);
  for (int l = 0; l < layers; ++l) {
    std::vector<int> perm(experts);
    std::iota(perm.begin(), perm.end(), 0);
    auto eng = keyed_engine(seed, shared_permutation ? 0 : static_cast<std::uint64_t>(l), 0,
                            kDriftTag);
    // Fisher-Yates on our own uniform draws, for cross-platform stability.
    for (int i = experts - 1; i > 0; --i) {
      const int j = static_cast<int>(eng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[i], perm[j]);
    }
    p.rank_to_expert[l] = std::move(perm);
  }
  return p;
}

std::vector<int> effective_permutation(const PopularityProfile& profile, int layer,
                                       long iteration) {
  if (layer < 0 || layer >= profile.num_layers())
    throw std::invalid_argument("layer out of range");
  const auto& base = profile.rank_to_expert[layer];
  if (profile.drift_period <= 0) return base;
  const long epoch = iteration / profile.drift_period;
  if (epoch == 0) return base;
  std::vector<int> perm = base;
  auto eng = keyed_engine(profile.perm_seed, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(layer), kDriftTag + 1);
  for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(eng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

std::vector<double> popularity_weights(const PopularityProfile& profile, int layer,
                                       long iteration, Phase phase) {
  const auto perm = effective_permutation(profile, layer, iteration);
  const double s = profile.exponent_for(phase);
  std::vector<double> w(perm.size(), 0.0);
  double norm = 0.0;
  for (std::size_t rank = 0; rank < perm.size(); ++rank)
    norm += 1.0 / std::pow(static_cast<double>(rank + 1), s);
  for (std::size_t rank = 0; rank < perm.size(); ++rank)
    w[perm[rank]] = (1.0 / std::pow(static_cast<double>(rank + 1), s)) / norm;
  return w;
}

std::vector<Request> parse_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::vector<Request> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    for (auto& c : line)
      if (c == ',' || c == '\t' || c == '\r') c = ' ';
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream fields(line);
    long long a = 0, p = 0, o = 0;
    const std::string where = path + ":" + std::to_string(line_no);
    if (!(fields >> a >> p >> o))
      throw std::runtime_error(where + ": expected three integer columns "
                               "(arrival_ms prompt_tokens output_tokens)");
    std::string extra;
    if (fields >> extra)
      throw std::runtime_error(where + ": trailing field '" + extra + "'");
    Request r{a, static_cast<int>(p), static_cast<int>(o)};
    try {
      check_request(r, where);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(e.what());
    }
    out.push_back(r);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Request& x, const Request& y) { return x.arrival_ms < y.arrival_ms; });
  return out;
}

void write_trace(const std::string& path, const std::vector<Request>& requests) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  for (const auto& r : requests)
    out << r.arrival_ms << " " << r.prompt_tokens << " " << r.output_tokens << "\n";
}

std::vector<Request> gen_synthetic_trace(int count, const TokenDistParams& params,
                                         std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("count must be >= 0");
  if (params.arrival_rate_per_s <= 0) throw std::invalid_argument("arrival rate must be > 0");
  if (params.prompt_log_sigma < 0 || params.output_log_sigma < 0)
    throw std::invalid_argument("log sigma must be >= 0");
  auto eng = keyed_engine(seed, 0, 0, 0x7472616365ULL);
  std::vector<Request> out;
  out.reserve(count);
  double t_s = 0.0;
  for (int i = 0; i < count; ++i) {
    t_s += rand_exponential(eng, params.arrival_rate_per_s);
    Request r;
    r.arrival_ms = static_cast<std::int64_t>(t_s * 1000.0);
    r.prompt_tokens = std::max(
        1, static_cast<int>(std::lround(rand_lognormal(eng, params.prompt_log_mean,
                                                       params.prompt_log_sigma))));
    r.output_tokens = std::max(
        1, static_cast<int>(std::lround(rand_lognormal(eng, params.output_log_mean,
                                                       params.output_log_sigma))));
    out.push_back(r);
  }
  return out;
}

std::vector<IterationBatch> batch_requests(const std::vector<Request>& requests) {
  for (std::size_t i = 0; i < requests.size(); ++i)
    check_request(requests[i], "request " + std::to_string(i));
  std::vector<Request> sorted = requests;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Request& x, const Request& y) { return x.arrival_ms < y.arrival_ms; });

  std::vector<IterationBatch> out;
  long iteration = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const std::int64_t second = sorted[i].arrival_ms / 1000;
    std::int64_t prompt_sum = 0;
    std::vector<int> outputs;
    while (i < sorted.size() && sorted[i].arrival_ms / 1000 == second) {
      prompt_sum += sorted[i].prompt_tokens;
      outputs.push_back(sorted[i].output_tokens);
      ++i;
    }
    out.push_back({iteration++, Phase::prefill, prompt_sum});
    const int max_out = *std::max_element(outputs.begin(), outputs.end());
    for (int t = 1; t <= max_out; ++t) {
      std::int64_t generating = 0;
      for (int o : outputs)
        if (o >= t) ++generating;
      out.push_back({iteration++, Phase::decode, generating});
    }
  }
  return out;
}

LoadVector route_tokens(const IterationBatch& batch, int layer,
                        const PopularityProfile& profile, int top_k, int experts,
                        std::uint64_t seed) {
  if (experts != profile.num_experts())
    throw std::invalid_argument("expert count does not match profile");
  if (top_k < 1 || top_k > experts) throw std::invalid_argument("top_k must be in [1, experts]");
  if (batch.token_count < 0) throw std::invalid_argument("token_count must be >= 0");

  const auto perm = effective_permutation(profile, layer, batch.iteration);
  const double s = profile.exponent_for(batch.phase);

  // Cumulative rank weights for inverse-CDF draws.
  std::vector<double> cum(experts, 0.0);
  double norm = 0.0;
  for (int rank = 0; rank < experts; ++rank) {
    norm += 1.0 / std::pow(static_cast<double>(rank + 1), s);
    cum[rank] = norm;
  }

  LoadVector lv;
  lv.layer = layer;
  lv.loads.assign(experts, 0);

  auto eng = keyed_engine(seed, static_cast<std::uint64_t>(batch.iteration),
                          static_cast<std::uint64_t>(layer), kRouteTag);
  std::vector<int> picked(top_k, -1);
  for (std::int64_t t = 0; t < batch.token_count; ++t) {
    int chosen = 0;
    while (chosen < top_k) {
      const double u = uniform01(eng) * norm;
      const int rank = static_cast<int>(
          std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
      const int expert = perm[std::min(rank, experts - 1)];
      bool dup = false;
      for (int c = 0; c < chosen; ++c)
        if (picked[c] == expert) dup = true;
      if (dup) continue;  // top-k experts of one token are distinct
      picked[chosen++] = expert;
      ++lv.loads[expert];
    }
  }
  return lv;
}

}  // namespace moeless
