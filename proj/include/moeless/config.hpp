// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "moeless/simulator.hpp"

namespace moeless {

// Flat key = value file; '#' starts a comment, blank lines are skipped, keys
// carry their units. Unknown keys and out-of-range values throw with the key
// named. Returns defaults when path is empty.
SimConfig load_config(const std::string& path);

SimConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

// The config rendered back to its flat text form (all keys, sorted).
std::string config_to_text(const SimConfig& config);

}  // namespace moeless
