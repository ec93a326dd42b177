// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/pipeline.hpp"

#include "sibtree/hashing.hpp"

#include <fmt/format.h>

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

namespace sibtree {
namespace {

using Work = std::function<ProblemCheckpoint(const Problem&)>;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_dataset_stage(const std::string& stage) {
  return stage == "sigma" || stage == "mcts-vanilla" || stage == "blackbox";
}

bool is_tree_stage(const std::string& stage) {
  return stage == "sigma" || stage == "mcts-vanilla" || stage == "search";
}

std::string problems_digest(const std::vector<Problem>& problems) {
  std::string key;
  for (const auto& p : problems) key += fmt::format("{}\x1f{}\x1f{}\x1e", p.id, p.question, p.reference_answer);
  return sha256_hex(key);
}

ordered_json reward_json(const RewardSpec& reward) {
  ordered_json j;
  j["kind"] = "binary";
  j["numeric_compare"] = reward.numeric_compare;
  j["relative_tolerance"] = reward.relative_tolerance;
  return j;
}

// Everything that influences outputs. Worker count is deliberately absent:
// outputs must not depend on it, and a resumed run may use a different one.
ordered_json stage_config(const std::string& stage, const SearchConfig* search, const PipelineOptions& options) {
  ordered_json j;
  if (search) j["search"] = to_json(*search);
  ordered_json pipeline;
  pipeline["reward"] = reward_json(options.reward);
  if (stage != "search" && stage != "blackbox") pipeline["max_siblings"] = options.max_siblings;
  if (stage == "sigma" || stage == "refine") pipeline["sequential_context"] = options.refine.sequential_context;
  if (stage == "blackbox") pipeline["blackbox_temperature"] = options.blackbox_temperature;
  j["pipeline"] = std::move(pipeline);
  return j;
}

struct Runner {
  std::string stage;
  ordered_json config;
  std::map<std::string, std::string> template_hashes;
  std::map<std::string, std::string> models;
};

ProblemCheckpoint guarded(const Work& work, const Problem& problem) {
  try {
    ProblemCheckpoint outcome = work(problem);
    outcome.problem_id = problem.id;
    return outcome;
  } catch (const std::exception& e) {
    ProblemCheckpoint failed;
    failed.problem_id = problem.id;
    failed.ok = false;
    failed.error = e.what();
    return failed;
  }
}

StageResult run_stage(const Runner& runner, const std::vector<Problem>& problems, const PipelineOptions& options,
                      const Work& work) {
  StageResult result;
  RunManifest& manifest = result.manifest;
  manifest.stage = runner.stage;
  manifest.config = runner.config;
  manifest.config_hash = sha256_hex(dump_json_17g(runner.config));
  manifest.seed = options.seed;
  manifest.template_hashes = runner.template_hashes;
  manifest.models = runner.models;
  manifest.started_at = utc_now();

  std::optional<CheckpointStore> store;
  std::map<std::string, ProblemCheckpoint> done;
  if (options.checkpoint_dir) {
    const std::string fingerprint = sha256_hex(fmt::format("{}\n{}\n{}\n{}", runner.stage, manifest.config_hash,
                                                           options.seed, problems_digest(problems)));
    store.emplace(*options.checkpoint_dir, fingerprint);
    done = store->load();
  }

  std::vector<const Problem*> pending;
  std::map<std::string, ProblemCheckpoint> outcomes;
  for (const auto& p : problems) {
    // Failures are retried on resume; only successes are final.
    if (auto it = done.find(p.id); it != done.end() && it->second.ok) {
      outcomes.emplace(p.id, it->second);
    } else {
      pending.push_back(&p);
    }
  }

  // Workers own problems end to end; the calling thread is the coordinator
  // and is the only one that touches the checkpoint store.
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<ProblemCheckpoint> finished;
  std::size_t running = 0;
  std::atomic<std::size_t> next{0};
  auto stopping = [&] { return options.stop_flag && options.stop_flag->load(); };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.workers)), std::max<std::size_t>(1, pending.size()));
  {
    std::vector<std::jthread> pool;
    running = n_workers;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          if (stopping()) break;
          const std::size_t i = next.fetch_add(1);
          if (i >= pending.size()) break;
          ProblemCheckpoint outcome = guarded(work, *pending[i]);
          std::lock_guard lock(mutex);
          finished.push_back(std::move(outcome));
          ready.notify_one();
        }
        std::lock_guard lock(mutex);
        --running;
        ready.notify_one();
      });
    }

    std::size_t committed = 0;
    std::unique_lock lock(mutex);
    for (;;) {
      ready.wait(lock, [&] { return !finished.empty() || running == 0; });
      if (finished.empty() && running == 0) break;
      ProblemCheckpoint outcome = std::move(finished.front());
      finished.pop_front();
      lock.unlock();
      if (store) store->commit(outcome);
      ++committed;
      if (options.after_commit) options.after_commit(committed);
      const std::string id = outcome.problem_id;
      outcomes.emplace(id, std::move(outcome));
      lock.lock();
    }
  }
  result.stopped = outcomes.size() < problems.size();

  RunCounts& counts = manifest.counts;
  counts.problems_in = problems.size();
  double reward_sum = 0.0;
  std::size_t reward_trees = 0;
  for (auto& [id, outcome] : outcomes) {
    ++counts.attempted;
    if (outcome.ok) {
      ++counts.succeeded;
      if (is_dataset_stage(runner.stage)) ++counts.records_out[runner.stage];
    } else {
      ++counts.failed;
      manifest.failures.push_back({id, outcome.error});
    }
    if (is_tree_stage(runner.stage)) {
      if (outcome.tree_dump.empty()) ++counts.trees_failed;
      else ++counts.trees_built;
    }
    if (outcome.root_value) {
      reward_sum += *outcome.root_value;
      ++reward_trees;
    }
    result.outcomes.push_back(std::move(outcome));
  }
  if (reward_trees > 0) manifest.rollout_reward_rate = reward_sum / static_cast<double>(reward_trees);
  manifest.finished_at = utc_now();
  return result;
}

std::map<std::string, std::string> merged_hashes(const ModelBackend& a, const ModelBackend* b) {
  std::map<std::string, std::string> hashes = a.templates().hashes();
  if (b) {
    for (auto& [name, hash] : b->templates().hashes()) hashes.emplace(name, hash);
  }
  return hashes;
}

ordered_json string_map_json(const std::map<std::string, std::string>& m) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

ordered_json path_ids_json(const SelectedPath& path) {
  ordered_json ids = ordered_json::array();
  for (NodeId id : path.node_ids) ids.push_back(id.value);
  return ids;
}

ordered_json common_metadata(const ReasoningTree& tree, const SelectedPath& path) {
  ordered_json meta;
  meta["temperature"] = tree.config().temperature;
  meta["tree_id"] = tree_id(tree);
  meta["seed"] = tree.seed();
  meta["path_depth"] = path.node_ids.size();
  meta["path_node_ids"] = path_ids_json(path);
  meta["cumulative_value"] = path.cumulative_value;
  meta["final_answer"] = path.final_answer ? ordered_json(*path.final_answer) : ordered_json(nullptr);
  return meta;
}

ProblemCheckpoint tree_outcome(const ReasoningTree& tree) {
  ProblemCheckpoint outcome;
  outcome.problem_id = tree.problem().id;
  outcome.tree_dump = dump_tree(tree);
  outcome.root_value = tree.node(tree.root()).value;
  return outcome;
}

// Attaches a record to an outcome; an empty response is a failure.
void finish_record(ProblemCheckpoint& outcome, const DatasetRecord& record) {
  if (record.response.empty()) {
    outcome.ok = false;
    outcome.error = "empty response";
    return;
  }
  outcome.ok = true;
  outcome.payload = to_jsonl_line(record);
}

template <typename F>
void after_tree(ProblemCheckpoint& outcome, F&& rest) {
  try {
    rest();
  } catch (const std::exception& e) {
    // The tree stays in the outcome so the failure can be inspected.
    outcome.ok = false;
    outcome.error = e.what();
  }
}

}  // namespace

std::uint64_t problem_seed(std::uint64_t global_seed, const std::string& problem_id) {
  return global_seed ^ stable_hash64(problem_id);
}

bool RunManifest::reconciles() const {
  if (counts.succeeded + counts.failed != counts.attempted) return false;
  if (counts.attempted > counts.problems_in) return false;
  if (is_tree_stage(stage) && counts.trees_built + counts.trees_failed != counts.attempted) return false;
  std::size_t records = 0;
  for (const auto& [variant, n] : counts.records_out) records += n;
  return records <= counts.succeeded && failures.size() == counts.failed;
}

ordered_json RunManifest::to_json(bool include_timestamps) const {
  ordered_json j;
  j["stage"] = stage;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["config"] = config;
  ordered_json c;
  c["problems_in"] = counts.problems_in;
  c["attempted"] = counts.attempted;
  c["succeeded"] = counts.succeeded;
  c["failed"] = counts.failed;
  c["trees_built"] = counts.trees_built;
  c["trees_failed"] = counts.trees_failed;
  ordered_json out = ordered_json::object();
  for (const auto& [variant, n] : counts.records_out) out[variant] = n;
  c["records_out"] = std::move(out);
  j["counts"] = std::move(c);
  j["rollout_reward_rate"] = rollout_reward_rate ? ordered_json(*rollout_reward_rate) : ordered_json(nullptr);
  j["template_hashes"] = string_map_json(template_hashes);
  j["models"] = string_map_json(models);
  ordered_json failed = ordered_json::array();
  for (const auto& f : failures) failed.push_back({{"problem_id", f.problem_id}, {"error", f.error}});
  j["failures"] = std::move(failed);
  if (include_timestamps) {
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
  }
  return j;
}

RunManifest RunManifest::from_json(const ordered_json& j) {
  RunManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.value("config_hash", std::string());
  m.config = j.value("config", ordered_json::object());
  const auto& c = j.at("counts");
  m.counts.problems_in = c.value("problems_in", std::size_t{0});
  m.counts.attempted = c.value("attempted", std::size_t{0});
  m.counts.succeeded = c.value("succeeded", std::size_t{0});
  m.counts.failed = c.value("failed", std::size_t{0});
  m.counts.trees_built = c.value("trees_built", std::size_t{0});
  m.counts.trees_failed = c.value("trees_failed", std::size_t{0});
  // Named copies: items() on a temporary would dangle.
  const ordered_json records_out = c.value("records_out", ordered_json::object());
  for (const auto& [k, v] : records_out.items()) {
    m.counts.records_out[k] = v.get<std::size_t>();
  }
  if (j.contains("rollout_reward_rate") && !j["rollout_reward_rate"].is_null()) {
    m.rollout_reward_rate = j["rollout_reward_rate"].get<double>();
  }
  const ordered_json hashes = j.value("template_hashes", ordered_json::object());
  for (const auto& [k, v] : hashes.items()) {
    m.template_hashes[k] = v.get<std::string>();
  }
  const ordered_json models = j.value("models", ordered_json::object());
  for (const auto& [k, v] : models.items()) m.models[k] = v.get<std::string>();
  for (const auto& f : j.value("failures", ordered_json::array())) {
    m.failures.push_back({f.at("problem_id").get<std::string>(), f.at("error").get<std::string>()});
  }
  m.started_at = j.value("started_at", std::string());
  m.finished_at = j.value("finished_at", std::string());
  return m;
}

DatasetRecord make_sigma_record(const ReasoningTree& tree, const SelectedPath& path,
                                const std::vector<SiblingSet>& sibling_sets, const RefinedPath& refined,
                                const RecordContext& context) {
  DatasetRecord record;
  record.problem_id = tree.problem().id;
  record.record_id = "sigma/" + record.problem_id;
  record.query = tree.problem().question;
  record.variant = Variant::sigma;
  const AssembledResponse response = assemble_response(tree.problem(), refined, tree.config().answer_markers);
  record.response = response.text;

  ordered_json meta = common_metadata(tree, path);
  ordered_json counts = ordered_json::array();
  for (const auto& set : sibling_sets) counts.push_back(set.siblings.size());
  meta["sibling_counts"] = std::move(counts);
  ordered_json statuses = ordered_json::array();
  for (const auto& step : refined.steps) statuses.push_back(to_string(step.status));
  meta["step_status"] = std::move(statuses);
  meta["missing_final_answer"] = response.missing_final_answer;
  meta["template_hashes"] = string_map_json(context.template_hashes);
  meta["generator_models"] = {{"generation", context.generation_model}, {"critique", context.critique_model}};
  record.metadata = std::move(meta);
  return record;
}

DatasetRecord make_vanilla_record(const ReasoningTree& tree, const SelectedPath& path, const RecordContext& context) {
  DatasetRecord record;
  record.problem_id = tree.problem().id;
  record.record_id = "mcts-vanilla/" + record.problem_id;
  record.query = tree.problem().question;
  record.variant = Variant::mcts_vanilla;
  const std::vector<std::string> steps = tree.step_texts(path.node_ids);
  const AssembledResponse response = assemble_steps(steps, path.final_answer, tree.config().answer_markers);
  record.response = response.text;

  ordered_json meta = common_metadata(tree, path);
  meta["sibling_counts"] = ordered_json::array();
  meta["missing_final_answer"] = response.missing_final_answer;
  meta["template_hashes"] = string_map_json(context.template_hashes);
  meta["generator_models"] = {{"generation", context.generation_model}};
  record.metadata = std::move(meta);
  return record;
}

std::vector<DatasetRecord> StageResult::records() const {
  std::vector<DatasetRecord> out;
  if (!is_dataset_stage(manifest.stage)) return out;
  for (const auto& o : outcomes) {
    if (o.ok && !o.payload.empty()) out.push_back(record_from_json(ordered_json::parse(o.payload)));
  }
  return out;
}

std::map<std::string, std::string> StageResult::tree_dumps() const {
  std::map<std::string, std::string> out;
  for (const auto& o : outcomes) {
    if (!o.tree_dump.empty()) out.emplace(o.problem_id, o.tree_dump);
  }
  return out;
}

StageResult run_sigma(const std::vector<Problem>& problems, const SearchConfig& config, ModelBackend& generation,
                      ModelBackend& refinement, const PipelineOptions& options) {
  config.validate();
  Runner runner{"sigma", stage_config("sigma", &config, options), merged_hashes(generation, &refinement),
                {{"generation", generation.model_name()}, {"critique", refinement.model_name()}}};
  const RecordContext context{generation.model_name(), refinement.model_name(), runner.template_hashes};
  return run_stage(runner, problems, options, [&](const Problem& problem) {
    const ReasoningTree tree =
        run_search(problem, generation, config, options.reward, problem_seed(options.seed, problem.id));
    ProblemCheckpoint outcome = tree_outcome(tree);
    after_tree(outcome, [&] {
      const SelectedPath path = extract_best_path(tree);
      const auto sets = collect_sibling_sets(tree, path, options.max_siblings);
      const RefinedPath refined = refine_path(refinement, tree, path, sets, options.refine);
      finish_record(outcome, make_sigma_record(tree, path, sets, refined, context));
    });
    return outcome;
  });
}

StageResult run_vanilla_mcts(const std::vector<Problem>& problems, const SearchConfig& config,
                             ModelBackend& generation, const PipelineOptions& options) {
  config.validate();
  Runner runner{"mcts-vanilla", stage_config("mcts-vanilla", &config, options), merged_hashes(generation, nullptr),
                {{"generation", generation.model_name()}}};
  const RecordContext context{generation.model_name(), std::string(), runner.template_hashes};
  return run_stage(runner, problems, options, [&](const Problem& problem) {
    const ReasoningTree tree =
        run_search(problem, generation, config, options.reward, problem_seed(options.seed, problem.id));
    ProblemCheckpoint outcome = tree_outcome(tree);
    after_tree(outcome, [&] {
      const SelectedPath path = extract_best_path(tree);
      finish_record(outcome, make_vanilla_record(tree, path, context));
    });
    return outcome;
  });
}

StageResult run_blackbox(const std::vector<Problem>& problems, ModelBackend& model, const PipelineOptions& options) {
  Runner runner{"blackbox", stage_config("blackbox", nullptr, options),
                {{model.templates().blackbox.name, model.templates().blackbox.hash}},
                {{"blackbox", model.model_name()}}};
  return run_stage(runner, problems, options, [&](const Problem& problem) {
    const std::uint64_t seed = problem_seed(options.seed, problem.id);
    DatasetRecord record;
    record.problem_id = problem.id;
    record.record_id = "blackbox/" + problem.id;
    record.query = problem.question;
    record.variant = Variant::blackbox;
    record.response = model.blackbox_cot(problem, options.blackbox_temperature, seed);
    ordered_json meta;
    meta["temperature"] = options.blackbox_temperature;
    meta["seed"] = seed;
    meta["template_hashes"] = string_map_json(runner.template_hashes);
    meta["generator_models"] = {{"blackbox", model.model_name()}};
    record.metadata = std::move(meta);
    ProblemCheckpoint outcome;
    finish_record(outcome, record);
    if (!outcome.ok) outcome.error = "empty completion";
    return outcome;
  });
}

StageResult run_search_stage(const std::vector<Problem>& problems, const SearchConfig& config,
                             ModelBackend& generation, const PipelineOptions& options) {
  config.validate();
  Runner runner{"search", stage_config("search", &config, options), merged_hashes(generation, nullptr),
                {{"generation", generation.model_name()}}};
  return run_stage(runner, problems, options, [&](const Problem& problem) {
    const ReasoningTree tree =
        run_search(problem, generation, config, options.reward, problem_seed(options.seed, problem.id));
    ProblemCheckpoint outcome = tree_outcome(tree);
    outcome.ok = true;
    return outcome;
  });
}

StageResult run_refine_stage(const std::vector<Problem>& problems, const std::map<std::string, std::string>& tree_dumps,
                             ModelBackend& refinement, const PipelineOptions& options) {
  Runner runner{"refine", stage_config("refine", nullptr, options), merged_hashes(refinement, nullptr),
                {{"critique", refinement.model_name()}}};
  return run_stage(runner, problems, options, [&](const Problem& problem) {
    auto it = tree_dumps.find(problem.id);
    if (it == tree_dumps.end()) throw std::runtime_error("no tree dump for problem '" + problem.id + "'");
    const ReasoningTree tree = load_tree(it->second, problem);
    const SelectedPath path = extract_best_path(tree);
    const auto sets = collect_sibling_sets(tree, path, options.max_siblings);
    const RefinedPath refined = refine_path(refinement, tree, path, sets, options.refine);
    ProblemCheckpoint outcome;
    outcome.ok = true;
    outcome.payload = dump_json_17g(to_json(refined));
    return outcome;
  });
}

StageResult emit_from_stages(const std::vector<Problem>& problems, const std::map<std::string, std::string>& tree_dumps,
                             const std::map<std::string, std::string>& refined_paths, const RecordContext& context,
                             const PipelineOptions& options) {
  Runner runner{"sigma", stage_config("emit", nullptr, options), context.template_hashes,
                {{"generation", context.generation_model}, {"critique", context.critique_model}}};
  return run_stage(runner, problems, options, [&](const Problem& problem) {
    auto dump = tree_dumps.find(problem.id);
    if (dump == tree_dumps.end()) throw std::runtime_error("no tree dump for problem '" + problem.id + "'");
    auto text = refined_paths.find(problem.id);
    if (text == refined_paths.end()) throw std::runtime_error("no refined path for problem '" + problem.id + "'");
    const ReasoningTree tree = load_tree(dump->second, problem);
    const SelectedPath path = extract_best_path(tree);
    const auto sets = collect_sibling_sets(tree, path, options.max_siblings);
    const RefinedPath refined = refined_path_from_json(nlohmann::json::parse(text->second));
    if (refined.tree_id != tree_id(tree) || refined.original_node_ids != path.node_ids) {
      throw std::runtime_error("refined path for '" + problem.id + "' does not match its tree");
    }
    if (auto issues = validate_refined_path(refined); !issues.empty()) {
      throw std::runtime_error("invalid refined path for '" + problem.id + "': " + issues.front());
    }
    ProblemCheckpoint outcome = tree_outcome(tree);
    finish_record(outcome, make_sigma_record(tree, path, sets, refined, context));
    return outcome;
  });
}

}  // namespace sibtree
