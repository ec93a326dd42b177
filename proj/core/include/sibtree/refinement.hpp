// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/backend.hpp"
#include "sibtree/mcts.hpp"
#include "sibtree/tree.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sibtree {

enum class StepStatus { refined, pass_through, fallback_original };

std::string to_string(StepStatus status);
StepStatus parse_step_status(const std::string& text);

/// Natural-language feedback for one step, produced by comparing the selected
/// step against its siblings.
struct TextualGradient {
  int depth = 0;
  std::string gradient_text;
  int sibling_count_used = 0;
  std::string prompt_hash;
};

struct RefinedStep {
  int depth = 0;
  StepStatus status = StepStatus::pass_through;
  std::string text;
  std::optional<TextualGradient> gradient;  // present iff status == refined
};

struct RefinedPath {
  std::string problem_id;
  std::string tree_id;
  std::vector<NodeId> original_node_ids;
  std::vector<RefinedStep> steps;
  std::optional<std::string> final_answer;  // answer of the unrefined path
};

struct RefineOptions {
  /// Feed already-refined earlier steps into later prompts. Off by default:
  /// each depth sees only its own step and siblings.
  bool sequential_context = false;
};

/// One critique call comparing `selected` with `siblings`. Throws
/// BackendError when the call fails or yields no text.
TextualGradient textual_gradient(ModelBackend& backend, const Problem& problem, int depth,
                                 const std::string& selected,
                                 std::span<const std::string> siblings,
                                 std::span<const std::string> context_steps = {});

struct TgdResult {
  std::string text;
  StepStatus status = StepStatus::refined;
};

/// One revision of `selected` along `gradient`. Never throws for backend
/// failures: the original text comes back with status fallback_original.
TgdResult tgd_step(ModelBackend& backend, const Problem& problem, const std::string& selected,
                   const TextualGradient& gradient,
                   std::span<const std::string> context_steps = {});

/// One pass over depths 1..D. Depths without siblings pass through; the rest
/// get one critique and one revision.
RefinedPath refine_path(ModelBackend& backend, const ReasoningTree& tree, const SelectedPath& path,
                        const std::vector<SiblingSet>& sibling_sets,
                        const RefineOptions& options = {});

/// Checks |steps| == |original_node_ids|, depth numbering, and that a
/// gradient is attached exactly to refined steps.
std::vector<std::string> validate_refined_path(const RefinedPath& refined);

struct AssembledResponse {
  std::string text;
  bool missing_final_answer = false;
};

/// Joins steps with a blank line. When the last step lost its answer marker
/// but the path had a final answer, it is restated at the end.
AssembledResponse assemble_steps(std::span<const std::string> steps,
                                 const std::optional<std::string>& final_answer,
                                 std::span<const std::string> markers);
AssembledResponse assemble_response(const Problem& problem, const RefinedPath& refined,
                                    std::span<const std::string> markers);

ordered_json to_json(const RefinedPath& refined);
RefinedPath refined_path_from_json(const nlohmann::json& j);

}  // namespace sibtree
