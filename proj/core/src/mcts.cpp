// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/mcts.hpp"

#include "sibtree/hashing.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sibtree {
namespace {

// Seed domains, so expansion and rollout draws never share a stream.
constexpr std::uint64_t kExpandTag = 0x657870616e64ULL;   // "expand"
constexpr std::uint64_t kRolloutTag = 0x726f6c6c6f7574ULL; // "rollout"

std::vector<std::string> prefix_of(const ReasoningTree& tree, NodeId node) {
  std::vector<NodeId> path = tree.path_to(node);
  path.erase(path.begin());  // the root carries no step text
  return tree.step_texts(path);
}

NodeId add_sample(ReasoningTree& tree, NodeId parent, const GenerationSample& sample) {
  const auto& markers = tree.config().answer_markers;
  const bool terminal = has_answer_marker(sample.text, markers);
  std::optional<std::string> answer;
  if (terminal) answer = extract_final_answer(sample.text, markers);
  return tree.add_child(parent, sample.text, sample.mean_logprob, terminal, std::move(answer));
}

double grade(const ReasoningTree& tree, const std::optional<std::string>& answer, const RewardSpec& reward) {
  if (!answer) return 0.0;
  return grade_answer(*answer, tree.problem().reference_answer, reward);
}

// Children of `parent` ordered by ranks_before, best first.
std::vector<std::size_t> ranked_children(const ReasoningTree& tree, const ReasoningNode& parent) {
  std::vector<std::size_t> order(parent.children.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(tree.node(parent.children[a]), a, tree.node(parent.children[b]), b);
  });
  return order;
}

void finish_path(const ReasoningTree& tree, SelectedPath& path) {
  path.cumulative_value = 0.0;
  for (NodeId id : path.node_ids) path.cumulative_value += tree.node(id).value;
  path.final_answer = tree.node(path.node_ids.back()).extracted_answer;
}

void best_sum_path(const ReasoningTree& tree, NodeId node, std::vector<NodeId>& current, double sum,
                   std::vector<NodeId>& best, double& best_sum) {
  const ReasoningNode& n = tree.node(node);
  if (n.children.empty() || n.terminal) {
    if (!current.empty() && (best.empty() || sum > best_sum)) {
      best = current;
      best_sum = sum;
    }
    return;
  }
  // Visiting children in rank order makes the greedy ordering the tie-break.
  for (std::size_t i : ranked_children(tree, n)) {
    const NodeId child = n.children[i];
    current.push_back(child);
    best_sum_path(tree, child, current, sum + tree.node(child).value, best, best_sum);
    current.pop_back();
  }
}

}  // namespace

double uct_score(double child_value, std::int64_t child_visits, std::int64_t parent_visits, double c_p) {
  if (child_visits == 0) return kUnvisitedScore;
  if (c_p == 0.0) return child_value;
  const double log_parent = std::log(static_cast<double>(std::max<std::int64_t>(parent_visits, 1)));
  return child_value + c_p * std::sqrt(log_parent / static_cast<double>(child_visits));
}

NodeId select_child(const ReasoningTree& tree, NodeId node, double c_p) {
  const ReasoningNode& parent = tree.node(node);
  if (parent.children.empty()) {
    throw SearchError(SearchErrc::no_children, fmt::format("node {} has no children", node.value));
  }
  NodeId best = parent.children.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (NodeId id : parent.children) {
    const ReasoningNode& child = tree.node(id);
    const double score = uct_score(child.value, child.visits, parent.visits, c_p);
    if (score > best_score) {
      best = id;
      best_score = score;
    }
  }
  return best;
}

std::vector<NodeId> expand(ReasoningTree& tree, NodeId node, ModelBackend& backend, std::uint64_t seed) {
  const ReasoningNode& target = tree.node(node);
  const SearchConfig& config = tree.config();
  if (target.terminal) {
    throw SearchError(SearchErrc::precondition, fmt::format("node {} is terminal", node.value));
  }
  if (target.depth >= config.d_max) {
    throw SearchError(SearchErrc::precondition,
                      fmt::format("node {} is at the depth limit {}", node.value, config.d_max));
  }
  const std::vector<std::string> prefix = prefix_of(tree, node);

  StepSampling sampling;
  sampling.k = config.best_of_k;
  sampling.temperature = config.temperature;
  sampling.max_tokens = config.max_step_tokens;

  std::vector<NodeId> created;
  if (config.expansion_mode == ExpansionMode::shared_pool) {
    sampling.seed = seed;
    sampling.stream = 0;
    std::vector<GenerationSample> pool = backend.sample_steps(tree.problem(), prefix, sampling);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].mean_logprob > pool[b].mean_logprob; });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(config.branching_n)));
    for (std::size_t i : order) created.push_back(add_sample(tree, node, pool[i]));
  } else {
    for (int slot = 0; slot < config.branching_n; ++slot) {
      sampling.seed = mix64(seed, static_cast<std::uint64_t>(slot));
      sampling.stream = slot;
      const std::vector<GenerationSample> samples = backend.sample_steps(tree.problem(), prefix, sampling);
      if (samples.empty()) continue;
      created.push_back(add_sample(tree, node, best_of(samples)));
    }
  }
  if (created.empty()) {
    throw SearchError(SearchErrc::expansion_failed,
                      fmt::format("no usable samples while expanding node {} of '{}'", node.value,
                                  tree.problem().id));
  }
  return created;
}

double rollout(const ReasoningTree& tree, NodeId node, ModelBackend& backend, const RewardSpec& reward,
               std::uint64_t seed) {
  const ReasoningNode& start = tree.node(node);
  if (start.terminal) return grade(tree, start.extracted_answer, reward);

  const SearchConfig& config = tree.config();
  std::vector<std::string> prefix = prefix_of(tree, node);
  StepSampling sampling;
  sampling.k = 1;
  sampling.temperature = config.temperature;
  sampling.max_tokens = config.max_step_tokens;
  for (int depth = start.depth; depth < config.d_max; ++depth) {
    sampling.seed = mix64(seed, static_cast<std::uint64_t>(depth));
    const std::vector<GenerationSample> samples = backend.sample_steps(tree.problem(), prefix, sampling);
    if (samples.empty()) return 0.0;
    const std::string& step = samples.front().text;
    if (has_answer_marker(step, config.answer_markers)) {
      return grade(tree, extract_final_answer(step, config.answer_markers), reward);
    }
    prefix.push_back(step);
  }
  return 0.0;
}

void backpropagate(ReasoningTree& tree, NodeId leaf, double reward) {
  for (NodeId id : tree.path_to(leaf)) {
    const ReasoningNode& n = tree.node(id);
    const double value = n.value + (reward - n.value) / static_cast<double>(n.visits + 1);
    tree.set_statistics(id, value, n.visits + 1);
  }
}

ReasoningTree run_search(const Problem& problem, ModelBackend& backend, const SearchConfig& config,
                         const RewardSpec& reward, std::uint64_t seed) {
  config.validate();
  ReasoningTree tree = new_tree(problem, config, seed);
  const std::uint64_t expand_seed = mix64(seed, kExpandTag);
  const std::uint64_t rollout_seed = mix64(seed, kRolloutTag);

  for (int sim = 0; sim < config.num_simulations; ++sim) {
    NodeId node = tree.root();
    while (!tree.node(node).children.empty() && !tree.node(node).terminal) {
      node = select_child(tree, node, config.c_p);
    }
    NodeId leaf = node;
    const ReasoningNode& n = tree.node(node);
    if (!n.terminal && n.depth < config.d_max) {
      leaf = expand(tree, node, backend, mix64(expand_seed, node.value)).front();
    }
    const double r = rollout(tree, leaf, backend, reward, mix64(rollout_seed, static_cast<std::uint64_t>(sim)));
    backpropagate(tree, leaf, r);
  }
  return tree;
}

bool ranks_before(const ReasoningNode& a, std::size_t index_a, const ReasoningNode& b, std::size_t index_b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.visits != b.visits) return a.visits > b.visits;
  return index_a < index_b;
}

SelectedPath extract_best_path(const ReasoningTree& tree) {
  return extract_best_path(tree, tree.config().path_mode);
}

SelectedPath extract_best_path(const ReasoningTree& tree, PathMode mode) {
  const ReasoningNode& root = tree.node(tree.root());
  if (root.visits == 0 || root.children.empty()) {
    throw SearchError(SearchErrc::empty_tree,
                      fmt::format("tree for '{}' has no completed simulation", tree.problem().id));
  }
  SelectedPath path;
  if (mode == PathMode::greedy) {
    NodeId node = tree.root();
    for (;;) {
      const ReasoningNode& n = tree.node(node);
      if (n.children.empty() || n.terminal) break;
      node = n.children[ranked_children(tree, n).front()];
      path.node_ids.push_back(node);
    }
  } else {
    std::vector<NodeId> current;
    double best_sum = 0.0;
    best_sum_path(tree, tree.root(), current, 0.0, path.node_ids, best_sum);
  }
  finish_path(tree, path);
  return path;
}

std::vector<SiblingSet> collect_sibling_sets(const ReasoningTree& tree, const SelectedPath& path,
                                             std::size_t max_siblings) {
  std::vector<SiblingSet> sets;
  sets.reserve(path.node_ids.size());
  for (NodeId id : path.node_ids) {
    const ReasoningNode& selected = tree.node(id);
    SiblingSet set;
    set.depth = selected.depth;
    set.selected = id;
    const ReasoningNode& parent = tree.node(*selected.parent);
    for (std::size_t i : ranked_children(tree, parent)) {
      if (set.siblings.size() >= max_siblings) break;
      if (parent.children[i] != id) set.siblings.push_back(parent.children[i]);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<std::string> check_search_invariants(const ReasoningTree& tree, std::int64_t expected_simulations) {
  std::vector<std::string> problems;
  const ReasoningNode& root = tree.node(tree.root());
  if (root.visits != expected_simulations) {
    problems.push_back(fmt::format("root: N = {}, expected {} simulations", root.visits, expected_simulations));
  }
  for (const ReasoningNode& n : tree.nodes()) {
    std::int64_t child_visits = 0;
    for (NodeId c : n.children) child_visits += tree.node(c).visits;
    if (child_visits > n.visits) {
      problems.push_back(fmt::format("node {}: N = {} but children total {}", n.id.value, n.visits, child_visits));
    }
  }
  return problems;
}

}  // namespace sibtree
