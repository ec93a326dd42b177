// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/backend.hpp"
#include "sibtree/grading.hpp"
#include "sibtree/tree.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sibtree {

enum class SearchErrc { no_children, precondition, expansion_failed, empty_tree };

class SearchError : public std::runtime_error {
 public:
  SearchError(SearchErrc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  SearchErrc code() const noexcept { return code_; }

 private:
  SearchErrc code_;
};

/// Score given to children that have never been visited, so every child is
/// tried once before any is revisited.
inline constexpr double kUnvisitedScore = std::numeric_limits<double>::infinity();

/// V_c + c_p * sqrt(ln N_parent / N_c), or kUnvisitedScore when n_child == 0.
double uct_score(double child_value, std::int64_t child_visits, std::int64_t parent_visits,
                 double c_p);

/// Child with maximal UCT score; earliest child on exact ties.
NodeId select_child(const ReasoningTree& tree, NodeId node, double c_p);

/// Creates up to branching_n children of `node` from best-of-k samples.
/// Samples are conditioned on the step texts of path_to(node). `seed` fixes
/// the draws so the whole search is reproducible.
std::vector<NodeId> expand(ReasoningTree& tree, NodeId node, ModelBackend& backend,
                           std::uint64_t seed);

/// Reward of continuing from `node` with single samples until an answer
/// marker appears or d_max is reached. Continuation steps are not stored.
double rollout(const ReasoningTree& tree, NodeId node, ModelBackend& backend,
               const RewardSpec& reward, std::uint64_t seed);

/// Incremental-mean update V <- V + (R - V) / (N + 1), N <- N + 1 on every
/// node from the root down to `leaf`.
void backpropagate(ReasoningTree& tree, NodeId leaf, double reward);

/// Full MCTS: select, expand, roll out from the first new child, back up;
/// repeated config.num_simulations times. Backend errors propagate.
ReasoningTree run_search(const Problem& problem, ModelBackend& backend, const SearchConfig& config,
                         const RewardSpec& reward, std::uint64_t seed);

struct SelectedPath {
  std::vector<NodeId> node_ids;  // depths 1..D, root excluded
  double cumulative_value = 0.0;
  std::optional<std::string> final_answer;
};

/// Reads off the best path using the tree's configured PathMode.
SelectedPath extract_best_path(const ReasoningTree& tree);
SelectedPath extract_best_path(const ReasoningTree& tree, PathMode mode);

/// Ordering used for every "best child" decision: higher V, then higher N,
/// then lower stored index.
bool ranks_before(const ReasoningNode& a, std::size_t index_a, const ReasoningNode& b,
                  std::size_t index_b);

struct SiblingSet {
  int depth = 0;
  NodeId selected;
  std::vector<NodeId> siblings;
};

/// For every depth on the path, the best `max_siblings` non-selected children
/// of the selected node's parent under ranks_before().
std::vector<SiblingSet> collect_sibling_sets(const ReasoningTree& tree, const SelectedPath& path,
                                             std::size_t max_siblings = 2);

/// Post-search checks beyond validate_structure(): root visits equal the
/// simulation count and no node has fewer visits than its children combined.
std::vector<std::string> check_search_invariants(const ReasoningTree& tree,
                                                 std::int64_t expected_simulations);

}  // namespace sibtree
