// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/refinement.hpp"

#include "sibtree/grading.hpp"

#include <fmt/format.h>

namespace sibtree {

std::string to_string(StepStatus status) {
  switch (status) {
    case StepStatus::refined: return "refined";
    case StepStatus::pass_through: return "pass-through";
    case StepStatus::fallback_original: return "fallback-original";
  }
  return "unknown";
}

StepStatus parse_step_status(const std::string& text) {
  if (text == "refined") return StepStatus::refined;
  if (text == "pass-through") return StepStatus::pass_through;
  if (text == "fallback-original") return StepStatus::fallback_original;
  throw std::invalid_argument("unknown step status '" + text + "'");
}

TextualGradient textual_gradient(ModelBackend& backend, const Problem& problem, int depth,
                                 const std::string& selected, std::span<const std::string> siblings,
                                 std::span<const std::string> context_steps) {
  TextResult result = backend.critique(problem, depth, selected, siblings, context_steps);
  TextualGradient gradient;
  gradient.depth = depth;
  gradient.gradient_text = std::move(result.text);
  gradient.sibling_count_used = static_cast<int>(siblings.size());
  gradient.prompt_hash = std::move(result.prompt_hash);
  return gradient;
}

TgdResult tgd_step(ModelBackend& backend, const Problem& problem, const std::string& selected,
                   const TextualGradient& gradient, std::span<const std::string> context_steps) {
  try {
    TextResult result = backend.revise(problem, gradient.depth, selected, gradient.gradient_text, context_steps);
    return {std::move(result.text), StepStatus::refined};
  } catch (const BackendError&) {
    return {selected, StepStatus::fallback_original};
  }
}

RefinedPath refine_path(ModelBackend& backend, const ReasoningTree& tree, const SelectedPath& path,
                        const std::vector<SiblingSet>& sibling_sets, const RefineOptions& options) {
  if (sibling_sets.size() != path.node_ids.size()) {
    throw std::invalid_argument(fmt::format("{} sibling sets for a path of length {}", sibling_sets.size(),
                                            path.node_ids.size()));
  }
  RefinedPath refined;
  refined.problem_id = tree.problem().id;
  refined.tree_id = tree_id(tree);
  refined.original_node_ids = path.node_ids;
  refined.final_answer = path.final_answer;

  std::vector<std::string> earlier;  // refined texts, used only in sequential mode
  for (std::size_t i = 0; i < path.node_ids.size(); ++i) {
    const SiblingSet& set = sibling_sets[i];
    if (set.selected != path.node_ids[i]) {
      throw std::invalid_argument(fmt::format("sibling set {} is for node {}, path has node {}", i,
                                              set.selected.value, path.node_ids[i].value));
    }
    const ReasoningNode& node = tree.node(path.node_ids[i]);
    RefinedStep step;
    step.depth = node.depth;
    step.text = node.step_text;
    step.status = StepStatus::pass_through;

    if (!set.siblings.empty()) {
      const std::vector<std::string> siblings = tree.step_texts(set.siblings);
      const std::span<const std::string> context =
          options.sequential_context ? std::span<const std::string>(earlier) : std::span<const std::string>();
      std::optional<TextualGradient> gradient;
      try {
        gradient = textual_gradient(backend, tree.problem(), node.depth, node.step_text, siblings, context);
      } catch (const BackendError&) {
        // No gradient available: the step stays as it was.
      }
      if (gradient) {
        TgdResult update = tgd_step(backend, tree.problem(), node.step_text, *gradient, context);
        step.text = std::move(update.text);
        step.status = update.status;
        if (update.status == StepStatus::refined) step.gradient = std::move(gradient);
      }
    }
    earlier.push_back(step.text);
    refined.steps.push_back(std::move(step));
  }
  return refined;
}

std::vector<std::string> validate_refined_path(const RefinedPath& refined) {
  std::vector<std::string> problems;
  if (refined.steps.size() != refined.original_node_ids.size()) {
    problems.push_back(fmt::format("{} steps for {} original nodes", refined.steps.size(),
                                   refined.original_node_ids.size()));
  }
  for (std::size_t i = 0; i < refined.steps.size(); ++i) {
    const RefinedStep& step = refined.steps[i];
    if (step.depth != static_cast<int>(i) + 1) {
      problems.push_back(fmt::format("step {}: depth {} out of sequence", i, step.depth));
    }
    if (step.gradient.has_value() != (step.status == StepStatus::refined)) {
      problems.push_back(fmt::format("step {}: gradient presence disagrees with status {}", i,
                                     to_string(step.status)));
    }
    if (step.gradient && step.gradient->sibling_count_used <= 0) {
      problems.push_back(fmt::format("step {}: refined without siblings", i));
    }
  }
  return problems;
}

AssembledResponse assemble_steps(std::span<const std::string> steps, const std::optional<std::string>& final_answer,
                                 std::span<const std::string> markers) {
  AssembledResponse out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) out.text += "\n\n";
    out.text += steps[i];
  }
  const bool marked = !steps.empty() && has_answer_marker(steps.back(), markers);
  if (!marked) {
    if (final_answer) {
      if (!out.text.empty()) out.text += "\n\n";
      out.text += fmt::format("The answer is \\boxed{{{}}}.", *final_answer);
    } else {
      out.missing_final_answer = true;
    }
  }
  return out;
}

AssembledResponse assemble_response(const Problem& problem, const RefinedPath& refined,
                                    std::span<const std::string> markers) {
  if (problem.id != refined.problem_id) {
    throw std::invalid_argument("refined path for '" + refined.problem_id + "' assembled against '" + problem.id +
                                "'");
  }
  std::vector<std::string> texts;
  texts.reserve(refined.steps.size());
  for (const auto& step : refined.steps) texts.push_back(step.text);
  return assemble_steps(texts, refined.final_answer, markers);
}

ordered_json to_json(const RefinedPath& refined) {
  ordered_json j;
  j["problem_id"] = refined.problem_id;
  j["tree_id"] = refined.tree_id;
  ordered_json ids = ordered_json::array();
  for (NodeId id : refined.original_node_ids) ids.push_back(id.value);
  j["original_node_ids"] = std::move(ids);
  ordered_json steps = ordered_json::array();
  for (const auto& step : refined.steps) {
    ordered_json s;
    s["depth"] = step.depth;
    s["status"] = to_string(step.status);
    s["text"] = step.text;
    if (step.gradient) {
      s["gradient_text"] = step.gradient->gradient_text;
      s["prompt_hash"] = step.gradient->prompt_hash;
      s["sibling_count_used"] = step.gradient->sibling_count_used;
    }
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  j["final_answer"] = refined.final_answer ? ordered_json(*refined.final_answer) : ordered_json(nullptr);
  return j;
}

RefinedPath refined_path_from_json(const nlohmann::json& j) {
  RefinedPath refined;
  refined.problem_id = j.at("problem_id").get<std::string>();
  refined.tree_id = j.at("tree_id").get<std::string>();
  for (const auto& id : j.at("original_node_ids")) refined.original_node_ids.push_back(NodeId{id.get<std::uint32_t>()});
  for (const auto& s : j.at("steps")) {
    RefinedStep step;
    step.depth = s.at("depth").get<int>();
    step.status = parse_step_status(s.at("status").get<std::string>());
    step.text = s.at("text").get<std::string>();
    if (s.contains("gradient_text")) {
      TextualGradient g;
      g.depth = step.depth;
      g.gradient_text = s.at("gradient_text").get<std::string>();
      g.prompt_hash = s.value("prompt_hash", std::string());
      g.sibling_count_used = s.value("sibling_count_used", 0);
      step.gradient = std::move(g);
    }
    refined.steps.push_back(std::move(step));
  }
  if (j.contains("final_answer") && !j["final_answer"].is_null()) {
    refined.final_answer = j["final_answer"].get<std::string>();
  }
  return refined;
}

}  // namespace sibtree
