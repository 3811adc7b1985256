// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moeless/simulator.hpp"

namespace moeless {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSamplesCsvHeader = "iteration,layer,policy,forward_ms,replicas,warm,cold";

// FNV-1a 64-bit over raw bytes, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string file_digest(const std::string& path);

std::string summary_json(const MetricsReport& report);
std::string samples_csv(const MetricsReport& report);
std::string comparison_json(const ComparisonReport& report);
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& param_name);

// Inputs that produced a run: tool version, digests of config and trace, seed,
// and the emitted files. Re-running the same inputs reproduces outputs byte
// for byte.
std::string manifest_json(const std::string& command, const std::string& config_digest,
                          const std::string& trace_digest, std::uint64_t seed,
                          const std::vector<std::string>& outputs);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Nearest-rank percentile (q in [0,1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace moeless
