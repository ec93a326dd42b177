// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/json_format.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace sibtree {

/// Raised for any out-of-range configuration value. `field()` names the
/// offending key (e.g. "search.c_p").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// How the n children of an expanded node are drawn.
///  - independent: each child is its own best-of-k draw.
///  - shared_pool: one pool of k samples, the n best by log-prob become children.
enum class ExpansionMode { independent, shared_pool };

/// How the final path is read off a finished tree.
///  - greedy: descend by max V (ties: higher N, then lower index).
///  - exhaustive: the root-to-leaf path maximizing the sum of V.
enum class PathMode { greedy, exhaustive };

struct SearchConfig {
  int num_simulations = 48;
  double c_p = 1.414;
  int branching_n = 3;
  int best_of_k = 5;
  int d_max = 16;
  double temperature = 0.7;
  int max_step_tokens = 256;
  ExpansionMode expansion_mode = ExpansionMode::independent;
  PathMode path_mode = PathMode::greedy;
  // Case-insensitive substrings marking a step that states the final answer.
  std::vector<std::string> answer_markers = {"\\boxed{", "the answer is"};

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

std::string to_string(ExpansionMode mode);
std::string to_string(PathMode mode);
ExpansionMode parse_expansion_mode(const std::string& text);
PathMode parse_path_mode(const std::string& text);

ordered_json to_json(const SearchConfig& config);
SearchConfig search_config_from_json(const nlohmann::json& j);

}  // namespace sibtree
