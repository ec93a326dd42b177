// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/json_format.hpp"
#include "sibtree/tree.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sibtree {

enum class PipelineErrc {
  io_error,
  parse_error,
  duplicate_id,
  empty_question,
  insufficient_records,
  id_collision,
  checkpoint_mismatch,
};

class PipelineError : public std::runtime_error {
 public:
  PipelineError(PipelineErrc code, const std::string& message, int line = 0)
      : std::runtime_error(message), code_(code), line_(line) {}
  PipelineErrc code() const noexcept { return code_; }
  /// 1-based input line the error refers to, 0 when not line-specific.
  int line() const noexcept { return line_; }

 private:
  PipelineErrc code_;
  int line_;
};

enum class Variant { sigma, mcts_vanilla, blackbox };

std::string to_string(Variant variant);  // "sigma" | "mcts-vanilla" | "blackbox"
Variant parse_variant(const std::string& text);

struct DatasetRecord {
  std::string record_id;
  std::string problem_id;
  std::string query;
  std::string response;
  Variant variant = Variant::sigma;
  ordered_json metadata = ordered_json::object();
};

ordered_json to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const ordered_json& j);
std::string to_jsonl_line(const DatasetRecord& record);  // no trailing newline

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);

struct IngestResult {
  std::vector<Problem> problems;
  int blank_lines_skipped = 0;
};

/// Reads problems JSONL {id, question, answer, source?}. Blank lines are
/// skipped and counted. Throws PipelineError with the offending line number.
IngestResult ingest_problems(const std::filesystem::path& path);

/// File-system safe, collision-resistant name for a problem id.
std::string safe_file_stem(const std::string& problem_id);

struct MixInput {
  std::filesystem::path path;
  std::size_t count = 0;
};

/// First `count` records of each input in file order, record ids rewritten
/// as "<input index>:<file stem>/<original id>".
std::vector<DatasetRecord> mix(const std::vector<MixInput>& inputs);

struct StatsReport {
  std::size_t records = 0;
  std::map<std::string, std::size_t> per_variant;
  std::map<std::string, std::size_t> per_temperature;
  std::map<int, std::size_t> depth_histogram;
  std::vector<double> mean_siblings_per_depth;  // index 0 is depth 1
  double pass_through_rate = 0.0;
  std::size_t refined_steps = 0;
  std::size_t pass_through_steps = 0;
  std::size_t fallback_steps = 0;
  std::map<std::string, double> response_length_percentiles;  // p10/p50/p90/max, in chars
  std::optional<double> rollout_reward_rate;

  ordered_json to_json() const;
  std::string to_text() const;
};

/// Summary of a dataset file; `manifest` adds rollout reward rates.
StatsReport stats(const std::filesystem::path& dataset,
                  const std::optional<std::filesystem::path>& manifest = std::nullopt);

}  // namespace sibtree
