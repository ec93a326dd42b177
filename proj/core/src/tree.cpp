// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/tree.hpp"

#include "sibtree/hashing.hpp"
#include "sibtree/json_format.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace sibtree {

ReasoningTree::ReasoningTree(Problem problem, SearchConfig config, std::uint64_t seed)
    : problem_(std::move(problem)), config_(std::move(config)), seed_(seed) {
  ReasoningNode root;
  root.id = kRootId;
  nodes_.push_back(std::move(root));
}

ReasoningTree ReasoningTree::from_parts(Problem problem, SearchConfig config, std::uint64_t seed,
                                        std::vector<ReasoningNode> nodes) {
  ReasoningTree tree;
  tree.problem_ = std::move(problem);
  tree.config_ = std::move(config);
  tree.seed_ = seed;
  tree.nodes_ = std::move(nodes);
  return tree;
}

const ReasoningNode& ReasoningTree::node(NodeId id) const {
  if (!contains(id)) {
    throw TreeError(TreeErrc::invalid_node, fmt::format("node {} does not exist", id.value));
  }
  return nodes_[id.value];
}

NodeId ReasoningTree::add_child(NodeId parent, std::string step_text, double sample_logprob,
                                bool terminal, std::optional<std::string> extracted_answer) {
  if (!contains(parent)) {
    throw TreeError(TreeErrc::invalid_parent, fmt::format("parent {} does not exist", parent.value));
  }
  const ReasoningNode& p = nodes_[parent.value];
  if (p.terminal) {
    throw TreeError(TreeErrc::parent_terminal,
                    fmt::format("parent {} is terminal", parent.value));
  }
  if (p.depth >= config_.d_max) {
    throw TreeError(TreeErrc::depth_limit_exceeded,
                    fmt::format("parent {} is at depth {} = d_max", parent.value, p.depth));
  }
  ReasoningNode child;
  child.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
  child.parent = parent;
  child.depth = p.depth + 1;
  child.step_text = std::move(step_text);
  child.sample_logprob = sample_logprob;
  child.terminal = terminal;
  child.extracted_answer = std::move(extracted_answer);
  const NodeId id = child.id;
  nodes_.push_back(std::move(child));
  nodes_[parent.value].children.push_back(id);
  return id;
}

void ReasoningTree::set_statistics(NodeId id, double value, std::int64_t visits) {
  if (!contains(id)) {
    throw TreeError(TreeErrc::invalid_node, fmt::format("node {} does not exist", id.value));
  }
  nodes_[id.value].value = value;
  nodes_[id.value].visits = visits;
}

std::vector<NodeId> ReasoningTree::siblings(NodeId id) const {
  const ReasoningNode& n = node(id);
  if (!n.parent) throw TreeError(TreeErrc::root_has_no_siblings, "the root has no siblings");
  std::vector<NodeId> out;
  for (NodeId child : node(*n.parent).children) {
    if (child != id) out.push_back(child);
  }
  return out;
}

std::vector<NodeId> ReasoningTree::path_to(NodeId id) const {
  std::vector<NodeId> path;
  std::optional<NodeId> cursor = node(id).id;
  while (cursor) {
    path.push_back(*cursor);
    if (path.size() > nodes_.size()) {
      throw TreeError(TreeErrc::malformed_dump, "parent links form a cycle");
    }
    cursor = node(*cursor).parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::string> ReasoningTree::step_texts(std::span<const NodeId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (NodeId id : ids) out.push_back(node(id).step_text);
  return out;
}

std::vector<std::string> ReasoningTree::validate_structure() const {
  std::vector<std::string> violations;
  auto report = [&](std::uint32_t id, const std::string& what) {
    violations.push_back(fmt::format("node {}: {}", id, what));
  };

  if (nodes_.empty()) {
    violations.emplace_back("tree has no root");
    return violations;
  }
  const ReasoningNode& root = nodes_.front();
  if (root.parent) report(0, "root has a parent");
  if (root.depth != 0) report(0, fmt::format("root depth is {}", root.depth));
  if (!root.step_text.empty()) report(0, "root step_text is not empty");

  std::vector<int> listed(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const ReasoningNode& n = nodes_[i];
    const auto idx = static_cast<std::uint32_t>(i);
    if (n.id.value != idx) report(idx, fmt::format("stored id {} differs from arena slot", n.id.value));
    if (i > 0 && !n.parent) report(idx, "non-root node without parent");
    if (n.depth > config_.d_max) report(idx, fmt::format("depth {} exceeds d_max {}", n.depth, config_.d_max));
    if (n.visits < 0) report(idx, "negative visit count");
    if (n.visits == 0 && n.value != 0.0) report(idx, "unvisited node has nonzero value");
    if (n.visits > 0 && !(n.value >= 0.0 && n.value <= 1.0)) {
      report(idx, fmt::format("value {} outside [0, 1]", n.value));
    }
    if (n.terminal && !n.children.empty()) report(idx, "terminal node has children");

    if (n.parent) {
      const auto p = n.parent->value;
      if (p >= nodes_.size()) {
        report(idx, fmt::format("parent {} does not exist", p));
      } else {
        const ReasoningNode& parent = nodes_[p];
        if (parent.depth + 1 != n.depth) {
          report(idx, fmt::format("depth {} but parent {} has depth {}", n.depth, p, parent.depth));
        }
        if (std::find(parent.children.begin(), parent.children.end(), n.id) == parent.children.end()) {
          report(idx, fmt::format("not listed among children of parent {}", p));
        }
      }
    }
    for (NodeId child : n.children) {
      if (child.value >= nodes_.size()) {
        report(idx, fmt::format("child {} does not exist", child.value));
        continue;
      }
      ++listed[child.value];
      const ReasoningNode& c = nodes_[child.value];
      if (!c.parent || *c.parent != n.id) {
        report(idx, fmt::format("lists child {} whose parent link points elsewhere", child.value));
      }
    }
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (listed[i] > 1) report(static_cast<std::uint32_t>(i), "listed as a child more than once");
  }
  return violations;
}

std::string tree_id(const ReasoningTree& tree) {
  return tree.problem().id + "@" + hex16(tree.seed());
}

std::string dump_tree(const ReasoningTree& tree) {
  ordered_json doc;
  doc["problem_id"] = tree.problem().id;
  doc["seed"] = tree.seed();
  doc["config"] = to_json(tree.config());
  ordered_json nodes = ordered_json::array();
  for (const ReasoningNode& n : tree.nodes()) {
    ordered_json item;
    item["id"] = n.id.value;
    item["parent"] = n.parent ? ordered_json(n.parent->value) : ordered_json(nullptr);
    item["depth"] = n.depth;
    item["step_text"] = n.step_text;
    item["v"] = n.value;
    item["n"] = n.visits;
    item["logprob"] = n.sample_logprob;
    item["terminal"] = n.terminal;
    item["extracted_answer"] =
        n.extracted_answer ? ordered_json(*n.extracted_answer) : ordered_json(nullptr);
    ordered_json children = ordered_json::array();
    for (NodeId c : n.children) children.push_back(c.value);
    item["children"] = std::move(children);
    nodes.push_back(std::move(item));
  }
  doc["nodes"] = std::move(nodes);
  return dump_json_17g(doc);
}

ReasoningTree load_tree(std::string_view dump, const std::optional<Problem>& problem) {
  try {
    const auto doc = nlohmann::json::parse(dump);
    const auto problem_id = doc.at("problem_id").get<std::string>();
    Problem p;
    if (problem) {
      if (problem->id != problem_id) {
        throw TreeError(TreeErrc::malformed_dump,
                        fmt::format("dump is for problem '{}', expected '{}'", problem_id, problem->id));
      }
      p = *problem;
    } else {
      p.id = problem_id;
    }
    std::vector<ReasoningNode> nodes;
    for (const auto& item : doc.at("nodes")) {
      ReasoningNode n;
      n.id = NodeId{item.at("id").get<std::uint32_t>()};
      if (!item.at("parent").is_null()) n.parent = NodeId{item.at("parent").get<std::uint32_t>()};
      n.depth = item.at("depth").get<int>();
      n.step_text = item.at("step_text").get<std::string>();
      n.value = item.at("v").get<double>();
      n.visits = item.at("n").get<std::int64_t>();
      n.sample_logprob = item.at("logprob").get<double>();
      n.terminal = item.at("terminal").get<bool>();
      if (!item.at("extracted_answer").is_null()) {
        n.extracted_answer = item.at("extracted_answer").get<std::string>();
      }
      for (const auto& c : item.at("children")) n.children.push_back(NodeId{c.get<std::uint32_t>()});
      nodes.push_back(std::move(n));
    }
    ReasoningTree tree = ReasoningTree::from_parts(std::move(p), search_config_from_json(doc.at("config")),
                                                   doc.at("seed").get<std::uint64_t>(), std::move(nodes));
    if (const auto problems = tree.validate_structure(); !problems.empty()) {
      throw TreeError(TreeErrc::malformed_dump, "inconsistent tree dump: " + problems.front());
    }
    return tree;
  } catch (const TreeError&) {
    throw;
  } catch (const std::exception& e) {
    throw TreeError(TreeErrc::malformed_dump, std::string("malformed tree dump: ") + e.what());
  }
}

}  // namespace sibtree
