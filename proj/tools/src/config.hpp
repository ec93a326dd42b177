// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sibtree/backend.hpp>
#include <sibtree/grading.hpp>
#include <sibtree/remote_backend.hpp>
#include <sibtree/search_config.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace sibtree::cli {

/// A config document: section -> key -> value. Values are JSON scalars or
/// arrays so every layer (file, flags, environment) shares one representation.
using ConfigDoc = std::map<std::string, std::map<std::string, nlohmann::json>>;

/// Parses the TOML subset documented in docs/config.md: [section] headers,
/// `key = value` with strings, integers, floats, booleans and single-line
/// arrays, and # comments. Errors are ConfigError with field "<origin>:<line>".
ConfigDoc parse_config_text(std::string_view text, const std::string& origin);
ConfigDoc read_config_file(const std::filesystem::path& path);

/// One value literal as it would appear after "key = ". Text that is not a
/// valid literal is taken as a bare string, which is what flags and
/// environment variables usually carry.
nlohmann::json parse_value(std::string_view literal);

/// Later layers win key by key.
void overlay(ConfigDoc& base, const ConfigDoc& top);

/// SIBTREE_<SECTION>_<KEY> variables for the known sections.
ConfigDoc environment_layer();

struct PipelineSettings {
  std::uint64_t seed = 1;
  int workers = 1;
  std::size_t max_siblings = 2;
  bool sequential_context = false;
  double blackbox_temperature = 0.7;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::filesystem::path> call_log;
  std::optional<std::filesystem::path> templates_dir;
};

struct MockSettings {
  bool enabled = false;
  std::optional<std::filesystem::path> script;
  std::uint64_t seed = 0;
  double correct_rate = 0.6;
  int max_steps = 6;
};

/// Fully validated view of every layer.
struct CliConfig {
  SearchConfig search;
  BackendConfig generation;
  BackendConfig critique;
  ModelBackend::Options model;
  PipelineSettings pipeline;
  RewardSpec reward;
  MockSettings mock;

  CliConfig();

  /// The effective configuration as a config document; rendering it gives a
  /// file that resolves back to the same CliConfig.
  ConfigDoc to_doc() const;
};

/// Builds and validates a CliConfig. Unknown keys and out-of-range values are
/// ConfigError naming "section.key".
CliConfig resolve(const ConfigDoc& doc);

std::string render_config(const ConfigDoc& doc);

}  // namespace sibtree::cli
