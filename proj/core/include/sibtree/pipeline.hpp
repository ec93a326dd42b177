// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/backend.hpp"
#include "sibtree/checkpoint.hpp"
#include "sibtree/dataset.hpp"
#include "sibtree/grading.hpp"
#include "sibtree/mcts.hpp"
#include "sibtree/refinement.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sibtree {

struct PipelineOptions {
  std::uint64_t seed = 1;
  int workers = 1;
  RewardSpec reward;
  RefineOptions refine;
  std::size_t max_siblings = 2;
  double blackbox_temperature = 0.7;
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Invoked on the coordinating side after every checkpoint commit with the
  /// number of problems completed so far in this process.
  std::function<void(std::size_t)> after_commit;
  /// When set and true, no new problems are started; finished ones are kept.
  const std::atomic<bool>* stop_flag = nullptr;
};

/// Per-problem seed: global seed XOR stable hash of the id, so results do not
/// depend on scheduling order or on which other problems are in the run.
std::uint64_t problem_seed(std::uint64_t global_seed, const std::string& problem_id);

struct RunCounts {
  std::size_t problems_in = 0;
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t trees_built = 0;
  std::size_t trees_failed = 0;
  std::map<std::string, std::size_t> records_out;
};

struct RunFailure {
  std::string problem_id;
  std::string error;
};

struct RunManifest {
  std::string stage;  // "sigma" | "mcts-vanilla" | "blackbox" | "search" | "refine"
  ordered_json config = ordered_json::object();
  std::string config_hash;
  std::uint64_t seed = 0;
  RunCounts counts;
  std::optional<double> rollout_reward_rate;  // mean root value over built trees
  std::map<std::string, std::string> template_hashes;
  std::map<std::string, std::string> models;
  std::vector<RunFailure> failures;
  std::string started_at;
  std::string finished_at;

  /// Counts reconcile: trees built + failed == attempted for tree stages,
  /// succeeded + failed == attempted always.
  bool reconciles() const;

  ordered_json to_json(bool include_timestamps = true) const;
  static RunManifest from_json(const ordered_json& j);
};

/// Models and template hashes stamped into record metadata.
struct RecordContext {
  std::string generation_model;
  std::string critique_model;
  std::map<std::string, std::string> template_hashes;
};

DatasetRecord make_sigma_record(const ReasoningTree& tree, const SelectedPath& path,
                                const std::vector<SiblingSet>& sibling_sets,
                                const RefinedPath& refined, const RecordContext& context);
DatasetRecord make_vanilla_record(const ReasoningTree& tree, const SelectedPath& path,
                                  const RecordContext& context);

/// Result of any stage. Outcomes are ordered by problem id.
struct StageResult {
  std::vector<ProblemCheckpoint> outcomes;
  RunManifest manifest;
  bool stopped = false;

  /// Records parsed from successful outcomes (dataset stages only).
  std::vector<DatasetRecord> records() const;
  /// problem id -> tree dump, for stages that build trees.
  std::map<std::string, std::string> tree_dumps() const;
};

/// search -> best path -> sibling sets -> refinement -> one sigma record per
/// problem. Failed problems are recorded in the manifest and emit nothing.
StageResult run_sigma(const std::vector<Problem>& problems, const SearchConfig& config,
                      ModelBackend& generation, ModelBackend& refinement,
                      const PipelineOptions& options);

/// As run_sigma without refinement: the best path's own steps are the response.
StageResult run_vanilla_mcts(const std::vector<Problem>& problems, const SearchConfig& config,
                             ModelBackend& generation, const PipelineOptions& options);

/// One black-box chain-of-thought call per problem.
StageResult run_blackbox(const std::vector<Problem>& problems, ModelBackend& model,
                         const PipelineOptions& options);

/// Search only; each successful outcome carries the tree dump.
StageResult run_search_stage(const std::vector<Problem>& problems, const SearchConfig& config,
                             ModelBackend& generation, const PipelineOptions& options);

/// Refinement over previously dumped trees (problem id -> dump). Successful
/// outcomes carry the serialized RefinedPath; a missing dump is a failure.
StageResult run_refine_stage(const std::vector<Problem>& problems,
                             const std::map<std::string, std::string>& tree_dumps,
                             ModelBackend& refinement, const PipelineOptions& options);

/// Sigma records from staged outputs (tree dumps plus refined paths).
StageResult emit_from_stages(const std::vector<Problem>& problems,
                             const std::map<std::string, std::string>& tree_dumps,
                             const std::map<std::string, std::string>& refined_paths,
                             const RecordContext& context, const PipelineOptions& options);

}  // namespace sibtree
