// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/search_config.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sibtree {

/// A question with its reference answer. Root context of every tree.
struct Problem {
  std::string id;
  std::string question;
  std::string reference_answer;
  std::string source;
};

/// Dense index into one tree's node arena. Meaningless outside that tree.
struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

inline constexpr NodeId kRootId{0};

/// One reasoning step. The root holds the problem statement and has an
/// empty step_text; reasoning steps start at depth 1.
struct ReasoningNode {
  NodeId id;
  std::optional<NodeId> parent;
  int depth = 0;
  std::string step_text;
  double value = 0.0;            // running mean of rewards routed through this node
  std::int64_t visits = 0;
  double sample_logprob = 0.0;   // mean per-token log-prob of the chosen sample
  bool terminal = false;
  std::optional<std::string> extracted_answer;
  std::vector<NodeId> children;  // insertion order; all tie-breaks use it
};

enum class TreeErrc {
  invalid_parent,
  parent_terminal,
  depth_limit_exceeded,
  root_has_no_siblings,
  invalid_node,
  malformed_dump,
};

class TreeError : public std::runtime_error {
 public:
  TreeError(TreeErrc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  TreeErrc code() const noexcept { return code_; }

 private:
  TreeErrc code_;
};

/// Append-only arena of reasoning nodes rooted at the problem statement.
///
/// Single-writer: one thread mutates a tree at a time. Const access after the
/// search completes may be shared.
class ReasoningTree {
 public:
  ReasoningTree(Problem problem, SearchConfig config, std::uint64_t seed);

  /// Rebuilds a tree from raw parts without checking anything. Callers that
  /// receive external data should run validate_structure() afterwards.
  static ReasoningTree from_parts(Problem problem, SearchConfig config, std::uint64_t seed,
                                  std::vector<ReasoningNode> nodes);

  const Problem& problem() const noexcept { return problem_; }
  const SearchConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  NodeId root() const noexcept { return kRootId; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool contains(NodeId id) const noexcept { return id.value < nodes_.size(); }

  /// Throws TreeError(invalid_node) for an id outside the arena.
  const ReasoningNode& node(NodeId id) const;
  std::span<const ReasoningNode> nodes() const noexcept { return nodes_; }

  NodeId add_child(NodeId parent, std::string step_text, double sample_logprob, bool terminal,
                   std::optional<std::string> extracted_answer);

  /// Overwrites the value statistics of one node.
  void set_statistics(NodeId id, double value, std::int64_t visits);

  /// Children of the node's parent in stored order, excluding the node.
  std::vector<NodeId> siblings(NodeId id) const;

  /// Root first, `id` last.
  std::vector<NodeId> path_to(NodeId id) const;

  /// Step texts of the given nodes, in order.
  std::vector<std::string> step_texts(std::span<const NodeId> ids) const;

  /// Every invariant violation found, each naming the offending node.
  /// Empty means the tree is well formed.
  std::vector<std::string> validate_structure() const;

 private:
  ReasoningTree() = default;

  Problem problem_;
  SearchConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<ReasoningNode> nodes_;
};

inline ReasoningTree new_tree(Problem problem, SearchConfig config, std::uint64_t seed) {
  return ReasoningTree(std::move(problem), std::move(config), seed);
}

/// Stable identifier for a tree: "<problem_id>@<seed as 16 hex digits>".
std::string tree_id(const ReasoningTree& tree);

/// Tree dump: one JSON document
/// {problem_id, seed, config, nodes:[{id, parent, depth, step_text, v, n,
/// logprob, terminal, extracted_answer, children}]}, floats with 17
/// significant digits.
std::string dump_tree(const ReasoningTree& tree);

/// Parses a dump. `problem` supplies question/answer text (the dump stores
/// only the id); when given, its id must match. Throws TreeError(malformed_dump).
ReasoningTree load_tree(std::string_view dump, const std::optional<Problem>& problem = std::nullopt);

}  // namespace sibtree
