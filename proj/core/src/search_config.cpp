// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/search_config.hpp"

namespace sibtree {

void SearchConfig::validate() const {
  if (num_simulations <= 0) throw ConfigError("search.num_simulations", "must be > 0");
  if (!(c_p >= 0.0)) throw ConfigError("search.c_p", "must be >= 0");
  if (branching_n <= 0) throw ConfigError("search.branching_n", "must be > 0");
  if (best_of_k <= 0) throw ConfigError("search.best_of_k", "must be > 0");
  if (expansion_mode == ExpansionMode::shared_pool && best_of_k < branching_n) {
    throw ConfigError("search.best_of_k", "shared_pool expansion needs best_of_k >= branching_n");
  }
  if (d_max <= 0) throw ConfigError("search.d_max", "must be > 0");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw ConfigError("search.temperature", "must be in [0, 2]");
  }
  if (max_step_tokens <= 0) throw ConfigError("search.max_step_tokens", "must be > 0");
  if (answer_markers.empty()) throw ConfigError("search.answer_markers", "must not be empty");
  for (const auto& marker : answer_markers) {
    if (marker.empty()) throw ConfigError("search.answer_markers", "markers must be nonempty");
  }
}

std::string to_string(ExpansionMode mode) {
  return mode == ExpansionMode::independent ? "independent" : "shared_pool";
}

std::string to_string(PathMode mode) { return mode == PathMode::greedy ? "greedy" : "exhaustive"; }

ExpansionMode parse_expansion_mode(const std::string& text) {
  if (text == "independent") return ExpansionMode::independent;
  if (text == "shared_pool") return ExpansionMode::shared_pool;
  throw ConfigError("search.expansion_mode", "expected independent|shared_pool, got '" + text + "'");
}

PathMode parse_path_mode(const std::string& text) {
  if (text == "greedy") return PathMode::greedy;
  if (text == "exhaustive") return PathMode::exhaustive;
  throw ConfigError("search.path_mode", "expected greedy|exhaustive, got '" + text + "'");
}

ordered_json to_json(const SearchConfig& config) {
  ordered_json j;
  j["num_simulations"] = config.num_simulations;
  j["c_p"] = config.c_p;
  j["branching_n"] = config.branching_n;
  j["best_of_k"] = config.best_of_k;
  j["d_max"] = config.d_max;
  j["temperature"] = config.temperature;
  j["max_step_tokens"] = config.max_step_tokens;
  j["expansion_mode"] = to_string(config.expansion_mode);
  j["path_mode"] = to_string(config.path_mode);
  j["answer_markers"] = config.answer_markers;
  return j;
}

SearchConfig search_config_from_json(const nlohmann::json& j) {
  SearchConfig config;
  config.num_simulations = j.at("num_simulations").get<int>();
  config.c_p = j.at("c_p").get<double>();
  config.branching_n = j.at("branching_n").get<int>();
  config.best_of_k = j.at("best_of_k").get<int>();
  config.d_max = j.at("d_max").get<int>();
  config.temperature = j.at("temperature").get<double>();
  config.max_step_tokens = j.at("max_step_tokens").get<int>();
  config.expansion_mode = parse_expansion_mode(j.at("expansion_mode").get<std::string>());
  config.path_mode = parse_path_mode(j.at("path_mode").get<std::string>());
  config.answer_markers = j.at("answer_markers").get<std::vector<std::string>>();
  return config;
}

}  // namespace sibtree
