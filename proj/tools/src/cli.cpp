// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "config.hpp"

#include <sibtree/call_log.hpp>
#include <sibtree/checkpoint.hpp>
#include <sibtree/dataset.hpp>
#include <sibtree/mock_backend.hpp>
#include <sibtree/pipeline.hpp>
#include <sibtree/prompts.hpp>
#include <sibtree/remote_backend.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace sibtree::cli {
namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Flags {
  std::string problems;
  std::string out;
  std::string config;
  std::string seed;
  std::string workers;
  std::string temperature;
  std::string cp;
  std::string simulations;
  std::string depth_max;
  std::string branching;
  std::string best_of;
  std::string max_siblings;
  std::string variant;
  std::string trees;
  std::string refined;
  std::string checkpoint;
  std::string manifest;
  std::string tree;
  std::string mock_script;
  std::string call_log;
  bool mock = false;
  bool dry_run = false;
  bool json = false;
  std::size_t crash_after = 0;
  std::vector<std::string> inputs;  // mix specs or the stats file
};

// Thrown for missing or conflicting flags; reported like a config error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ConfigDoc flag_layer(const Flags& f) {
  ConfigDoc doc;
  auto set = [&](const std::string& value, const char* section, const char* key) {
    if (!value.empty()) doc[section][key] = parse_value(value);
  };
  set(f.seed, "pipeline", "seed");
  set(f.workers, "pipeline", "workers");
  set(f.max_siblings, "pipeline", "max_siblings");
  set(f.temperature, "search", "temperature");
  set(f.cp, "search", "c_p");
  set(f.simulations, "search", "num_simulations");
  set(f.depth_max, "search", "d_max");
  set(f.branching, "search", "branching_n");
  set(f.best_of, "search", "best_of_k");
  // Paths stay strings even when they look like numbers.
  if (!f.checkpoint.empty()) doc["pipeline"]["checkpoint_dir"] = f.checkpoint;
  if (!f.call_log.empty()) doc["pipeline"]["call_log"] = f.call_log;
  if (!f.mock_script.empty()) doc["mock"]["script"] = f.mock_script;
  if (f.mock || !f.mock_script.empty()) doc["mock"]["enabled"] = true;
  return doc;
}

CliConfig load_config(const Flags& f) {
  ConfigDoc doc;
  if (!f.config.empty()) overlay(doc, read_config_file(f.config));
  overlay(doc, flag_layer(f));
  overlay(doc, environment_layer());
  return resolve(doc);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError(PipelineErrc::io_error, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct Backends {
  std::shared_ptr<CallLog> log;
  std::unique_ptr<ModelBackend> generation;
  std::unique_ptr<ModelBackend> critique;
};

Backends make_backends(const CliConfig& cfg) {
  PromptTemplates templates =
      cfg.pipeline.templates_dir ? PromptTemplates::load_dir(*cfg.pipeline.templates_dir) : PromptTemplates::builtin();
  Backends b;
  CallLog::Options log_options;
  log_options.keep_in_memory = false;
  log_options.jsonl_path = cfg.pipeline.call_log;
  b.log = std::make_shared<CallLog>(log_options);

  std::shared_ptr<Generator> gen;
  std::shared_ptr<Generator> crit;
  if (cfg.mock.enabled) {
    MockScript script;
    script.seed = cfg.mock.seed;
    script.correct_rate = cfg.mock.correct_rate;
    script.max_steps = cfg.mock.max_steps;
    if (cfg.mock.script) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_text(*cfg.mock.script));
        // Values in the script file take precedence over [mock] settings.
        if (!j.contains("seed")) j["seed"] = script.seed;
        if (!j.contains("correct_rate")) j["correct_rate"] = script.correct_rate;
        if (!j.contains("max_steps")) j["max_steps"] = script.max_steps;
        script = MockScript::from_json(j);
      } catch (const PipelineError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError("mock.script", std::string("invalid mock script: ") + e.what());
      }
    }
    gen = std::make_shared<MockGenerator>(script, "mock-generation");
    crit = std::make_shared<MockGenerator>(script, "mock-critique");
  } else {
    gen = std::make_shared<RemoteGenerator>(cfg.generation);
    crit = std::make_shared<RemoteGenerator>(cfg.critique);
  }
  b.generation = std::make_unique<ModelBackend>(gen, templates, b.log, cfg.model);
  b.critique = std::make_unique<ModelBackend>(crit, templates, b.log, cfg.model);
  return b;
}

std::vector<Problem> load_problems(const Flags& f) {
  if (f.problems.empty()) throw UsageError("--problems is required");
  IngestResult in = ingest_problems(f.problems);
  if (in.blank_lines_skipped > 0) {
    fmt::print(stderr, "warning: {} blank line(s) skipped in {}\n", in.blank_lines_skipped, f.problems);
  }
  return std::move(in.problems);
}

PipelineOptions pipeline_options(const CliConfig& cfg, const Flags& f, std::size_t total, const char* stage) {
  PipelineOptions o;
  o.seed = cfg.pipeline.seed;
  o.workers = cfg.pipeline.workers;
  o.reward = cfg.reward;
  o.refine.sequential_context = cfg.pipeline.sequential_context;
  o.max_siblings = cfg.pipeline.max_siblings;
  o.blackbox_temperature = cfg.pipeline.blackbox_temperature;
  o.checkpoint_dir = cfg.pipeline.checkpoint_dir;
  o.stop_flag = &g_stop;
  const std::size_t crash_after = f.crash_after;
  o.after_commit = [=](std::size_t done) {
    fmt::print("[{}] {}/{}\n", stage, done, total);
    std::fflush(stdout);
    // Test hook: die abruptly, as a killed process would.
    if (crash_after > 0 && done >= crash_after) std::_Exit(137);
  };
  return o;
}

void require_out(const Flags& f) {
  if (f.out.empty()) throw UsageError("--out is required");
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, dump_json_17g(manifest.to_json()) + "\n");
}

std::filesystem::path manifest_path_for(const Flags& f) {
  if (!f.manifest.empty()) return f.manifest;
  std::filesystem::path p = f.out;
  p.replace_extension(".manifest.json");
  return p;
}

// Loads "<dir>/*<suffix>" files keyed by their "problem_id" field.
std::map<std::string, std::string> load_keyed(const std::string& dir, const std::string& suffix) {
  if (!std::filesystem::is_directory(dir)) throw PipelineError(PipelineErrc::io_error, "not a directory: " + dir);
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    std::string text = read_text(entry.path());
    try {
      const std::string id = nlohmann::json::parse(text).at("problem_id").get<std::string>();
      out.emplace(id, std::move(text));
    } catch (const nlohmann::json::exception& e) {
      throw PipelineError(PipelineErrc::parse_error, entry.path().string() + ": " + e.what());
    }
  }
  return out;
}

int finish(const char* stage, const StageResult& result, const std::string& destination) {
  const RunCounts& c = result.manifest.counts;
  fmt::print("{}: {} problems, {} ok, {} failed -> {}\n", stage, c.problems_in, c.succeeded, c.failed, destination);
  for (const auto& failure : result.manifest.failures) {
    fmt::print(stderr, "failed: {}: {}\n", failure.problem_id, failure.error);
  }
  if (result.stopped) {
    fmt::print(stderr, "interrupted: {} problem(s) not started\n", c.problems_in - c.attempted);
    return kExitPartial;
  }
  return c.failed > 0 ? kExitPartial : kExitOk;
}

int dry_run(const CliConfig& cfg, const std::string& command) {
  fmt::print("# effective configuration for '{}'\n{}", command, render_config(cfg.to_doc()));
  return kExitOk;
}

int cmd_search(const Flags& f) {
  const CliConfig cfg = load_config(f);
  if (f.dry_run) return dry_run(cfg, "search");
  require_out(f);
  const auto problems = load_problems(f);
  Backends b = make_backends(cfg);
  const StageResult result =
      run_search_stage(problems, cfg.search, *b.generation, pipeline_options(cfg, f, problems.size(), "search"));
  std::filesystem::create_directories(f.out);
  for (const auto& [id, dump] : result.tree_dumps()) {
    write_file_atomic(std::filesystem::path(f.out) / (safe_file_stem(id) + ".tree.json"), dump + "\n");
  }
  write_manifest(std::filesystem::path(f.out) / "manifest.json", result.manifest);
  return finish("search", result, f.out);
}

int cmd_refine(const Flags& f) {
  const CliConfig cfg = load_config(f);
  if (f.dry_run) return dry_run(cfg, "refine");
  require_out(f);
  if (f.trees.empty()) throw UsageError("--trees is required");
  const auto problems = load_problems(f);
  const auto dumps = load_keyed(f.trees, ".tree.json");
  Backends b = make_backends(cfg);
  const StageResult result =
      run_refine_stage(problems, dumps, *b.critique, pipeline_options(cfg, f, problems.size(), "refine"));
  std::filesystem::create_directories(f.out);
  for (const auto& o : result.outcomes) {
    if (!o.ok) continue;
    write_file_atomic(std::filesystem::path(f.out) / (safe_file_stem(o.problem_id) + ".refined.json"),
                      o.payload + "\n");
  }
  write_manifest(std::filesystem::path(f.out) / "manifest.json", result.manifest);
  return finish("refine", result, f.out);
}

int write_dataset_outputs(const char* stage, const Flags& f, const StageResult& result) {
  const std::filesystem::path out = f.out;
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_dataset(out, result.records());
  write_manifest(manifest_path_for(f), result.manifest);
  return finish(stage, result, f.out);
}

int cmd_emit(const Flags& f) {
  const CliConfig cfg = load_config(f);
  if (f.dry_run) return dry_run(cfg, "emit");
  require_out(f);
  const auto problems = load_problems(f);
  const PipelineOptions options = pipeline_options(cfg, f, problems.size(), "emit");
  if (!f.trees.empty() || !f.refined.empty()) {
    if (f.trees.empty() || f.refined.empty()) throw UsageError("staged emit needs both --trees and --refined");
    const auto dumps = load_keyed(f.trees, ".tree.json");
    const auto refined = load_keyed(f.refined, ".refined.json");
    const PromptTemplates templates = cfg.pipeline.templates_dir ? PromptTemplates::load_dir(*cfg.pipeline.templates_dir)
                                                                 : PromptTemplates::builtin();
    RecordContext context;
    context.generation_model = cfg.mock.enabled ? "mock-generation" : cfg.generation.model_name;
    context.critique_model = cfg.mock.enabled ? "mock-critique" : cfg.critique.model_name;
    context.template_hashes = templates.hashes();
    return write_dataset_outputs("emit", f, emit_from_stages(problems, dumps, refined, context, options));
  }
  Backends b = make_backends(cfg);
  return write_dataset_outputs("emit", f, run_sigma(problems, cfg.search, *b.generation, *b.critique, options));
}

int cmd_ablate(const Flags& f) {
  const CliConfig cfg = load_config(f);
  Variant variant;
  try {
    variant = parse_variant(f.variant);
  } catch (const std::exception& e) {
    throw ConfigError("--variant", e.what());
  }
  if (variant == Variant::sigma) throw ConfigError("--variant", "sigma is produced by 'emit'");
  if (f.dry_run) return dry_run(cfg, "ablate");
  require_out(f);
  const auto problems = load_problems(f);
  Backends b = make_backends(cfg);
  const PipelineOptions options = pipeline_options(cfg, f, problems.size(), "ablate");
  if (variant == Variant::mcts_vanilla) {
    return write_dataset_outputs("ablate", f, run_vanilla_mcts(problems, cfg.search, *b.generation, options));
  }
  return write_dataset_outputs("ablate", f, run_blackbox(problems, *b.critique, options));
}

int cmd_mix(const Flags& f) {
  require_out(f);
  if (f.inputs.empty()) throw UsageError("mix needs at least one FILE:COUNT input");
  std::vector<MixInput> inputs;
  for (const auto& spec : f.inputs) {
    const std::size_t colon = spec.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
      throw ConfigError("mix", "expected FILE:COUNT, got '" + spec + "'");
    }
    const std::string count = spec.substr(colon + 1);
    if (count.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("mix", "bad count in '" + spec + "'");
    }
    inputs.push_back({spec.substr(0, colon), static_cast<std::size_t>(std::stoull(count))});
  }
  if (f.dry_run) {
    for (const auto& in : inputs) fmt::print("{}: first {} record(s)\n", in.path.string(), in.count);
    return kExitOk;
  }
  const auto records = mix(inputs);
  const std::filesystem::path out = f.out;
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  write_dataset(out, records);
  fmt::print("mix: {} records -> {}\n", records.size(), f.out);
  return kExitOk;
}

std::string one_line(const std::string& text, std::size_t limit) {
  std::string out;
  for (char c : text) out.push_back(c == '\n' || c == '\r' || c == '\t' ? ' ' : c);
  if (out.size() > limit) out = out.substr(0, limit - 3) + "...";
  return out;
}

int cmd_inspect(const Flags& f) {
  const CliConfig cfg = load_config(f);
  if (f.dry_run) return dry_run(cfg, "inspect");
  if (f.trees.empty() || f.tree.empty()) throw UsageError("inspect needs --trees DIR and --tree ID");
  const auto dumps = load_keyed(f.trees, ".tree.json");
  const std::string* found = nullptr;
  for (const auto& [id, dump] : dumps) {
    if (id == f.tree) found = &dump;
  }
  std::optional<ReasoningTree> tree;
  if (found) {
    tree.emplace(load_tree(*found));
  } else {
    for (const auto& [id, dump] : dumps) {
      ReasoningTree candidate = load_tree(dump);
      if (tree_id(candidate) == f.tree) {
        tree.emplace(std::move(candidate));
        break;
      }
    }
  }
  if (!tree) throw PipelineError(PipelineErrc::io_error, "no tree '" + f.tree + "' in " + f.trees);

  std::set<std::uint32_t> selected;
  std::set<std::uint32_t> retained;
  if (tree->node(tree->root()).visits > 0 && !tree->node(tree->root()).children.empty()) {
    const SelectedPath path = extract_best_path(*tree);
    for (NodeId id : path.node_ids) selected.insert(id.value);
    for (const auto& set : collect_sibling_sets(*tree, path, cfg.pipeline.max_siblings)) {
      for (NodeId id : set.siblings) retained.insert(id.value);
    }
  }
  // Depth-first, children in stored order.
  std::vector<NodeId> stack{tree->root()};
  while (!stack.empty()) {
    const ReasoningNode& n = tree->node(stack.back());
    stack.pop_back();
    const char mark = selected.count(n.id.value) ? '*' : retained.count(n.id.value) ? '+' : ' ';
    const std::string text = n.depth == 0 ? "[problem " + tree->problem().id + "]" : one_line(n.step_text, 72);
    fmt::print("{} {:{}}#{:<4} d={:<2} V={:.4f} N={:<4} {}{}\n", mark, "", 2 * n.depth, n.id.value, n.depth, n.value,
               n.visits, n.terminal ? "T " : "", text);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return kExitOk;
}

int cmd_stats(const Flags& f) {
  if (f.inputs.size() != 1) throw UsageError("stats needs exactly one dataset file");
  std::optional<std::filesystem::path> manifest;
  if (!f.manifest.empty()) manifest = f.manifest;
  if (f.dry_run) return kExitOk;
  const StatsReport report = stats(f.inputs.front(), manifest);
  if (f.json) fmt::print("{}\n", dump_json_17g(report.to_json()));
  else fmt::print("{}", report.to_text());
  return kExitOk;
}

void add_config_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "TOML-style config file");
  sub->add_flag("--mock", f.mock, "Use the deterministic mock backend");
  sub->add_option("--mock-script", f.mock_script, "JSON mock script (implies --mock)");
  sub->add_flag("--dry-run", f.dry_run, "Validate and print the effective configuration, then exit");
}

void add_search_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--seed", f.seed, "Global seed");
  sub->add_option("--workers", f.workers, "Worker threads");
  sub->add_option("--temperature", f.temperature, "Step sampling temperature");
  sub->add_option("--cp", f.cp, "UCT exploration constant");
  sub->add_option("--simulations", f.simulations, "Simulations per tree");
  sub->add_option("--depth-max", f.depth_max, "Maximum tree depth");
  sub->add_option("--branching", f.branching, "Children per expansion");
  sub->add_option("--best-of", f.best_of, "Samples per child");
  sub->add_option("--max-siblings", f.max_siblings, "Siblings retained per depth");
  sub->add_option("--checkpoint", f.checkpoint, "Checkpoint directory (resume if it exists)");
  sub->add_option("--call-log", f.call_log, "Append backend calls to this JSONL file");
  sub->add_option("--crash-after", f.crash_after)->group("");
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Search-tree data synthesis with sibling-guided refinement", "sibtree"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sibtree 0.3.0");
  Flags f;

  auto* search = app.add_subcommand("search", "Build search trees and write tree dumps");
  auto* refine = app.add_subcommand("refine", "Refine the best path of each dumped tree");
  auto* emit = app.add_subcommand("emit", "Write the refined dataset (end to end, or from staged outputs)");
  auto* ablate = app.add_subcommand("ablate", "Write an ablation dataset (mcts-vanilla or blackbox)");
  auto* mixer = app.add_subcommand("mix", "Concatenate prefixes of dataset files");
  auto* inspect = app.add_subcommand("inspect", "Print one tree with its selected path and siblings");
  auto* stat = app.add_subcommand("stats", "Summarize a dataset file");

  for (auto* sub : {search, refine, emit, ablate}) {
    add_config_flags(sub, f);
    add_search_flags(sub, f);
    sub->add_option("--problems", f.problems, "Problems JSONL");
    sub->add_option("--out", f.out, "Output directory or file");
  }
  add_config_flags(inspect, f);
  refine->add_option("--trees", f.trees, "Directory of tree dumps");
  emit->add_option("--trees", f.trees, "Directory of tree dumps (staged emit)");
  emit->add_option("--refined", f.refined, "Directory of refined paths (staged emit)");
  for (auto* sub : {emit, ablate}) sub->add_option("--manifest", f.manifest, "Manifest path (default <out>.manifest.json)");
  ablate->add_option("--variant", f.variant, "mcts-vanilla | blackbox")->required();
  mixer->add_option("inputs", f.inputs, "FILE:COUNT, in output order")->required();
  mixer->add_option("--out", f.out, "Output dataset")->required();
  mixer->add_flag("--dry-run", f.dry_run, "Print the plan only");
  inspect->add_option("--trees", f.trees, "Directory of tree dumps")->required();
  inspect->add_option("--tree", f.tree, "Tree id or problem id")->required();
  inspect->add_option("--max-siblings", f.max_siblings, "Siblings retained per depth");
  stat->add_option("file", f.inputs, "Dataset JSONL")->required();
  stat->add_option("--manifest", f.manifest, "Manifest of the run that produced the file");
  stat->add_flag("--json", f.json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (search->parsed()) return cmd_search(f);
    if (refine->parsed()) return cmd_refine(f);
    if (emit->parsed()) return cmd_emit(f);
    if (ablate->parsed()) return cmd_ablate(f);
    if (mixer->parsed()) return cmd_mix(f);
    if (inspect->parsed()) return cmd_inspect(f);
    if (stat->parsed()) return cmd_stats(f);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitConfig;
  } catch (const TemplateError& e) {
    fmt::print(stderr, "template error: {}\n", e.what());
    return kExitConfig;
  } catch (const PipelineError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.code() == PipelineErrc::checkpoint_mismatch ? kExitConfig : kExitIo;
  } catch (const TreeError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace sibtree::cli
