// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "support.hpp"

#include "cli.hpp"
#include "config.hpp"

#include <sibtree/dataset.hpp>

#include <cstdlib>

using namespace sibtree;
using namespace sibtree::cli;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sibtree");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

std::string field_of(const ConfigDoc& doc) {
  try {
    resolve(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config text parsing") {
    const auto doc = parse_config_text(
        "# comment\n[search]\nnum_simulations = 12  # trailing\nc_p = 0.5\nanswer_markers = [\"a\", \"b\"]\n"
        "[pipeline]\nsequential_context = true\ncheckpoint_dir = \"ck # not a comment\"\n",
        "t.toml");
    CHECK(doc.at("search").at("num_simulations") == 12);
    CHECK(doc.at("search").at("c_p") == 0.5);
    CHECK(doc.at("search").at("answer_markers") == nlohmann::json::array({"a", "b"}));
    CHECK(doc.at("pipeline").at("sequential_context") == true);
    CHECK(doc.at("pipeline").at("checkpoint_dir") == "ck # not a comment");
    try {
      parse_config_text("[search]\nno equals here\n", "t.toml");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "t.toml:2");
    }
  }

  TEST_CASE("literal values") {
    CHECK(parse_value("3") == 3);
    CHECK(parse_value("-1.5") == -1.5);
    CHECK(parse_value("false") == false);
    CHECK(parse_value("\"q\"") == "q");
    CHECK(parse_value("bare words") == "bare words");
  }

  TEST_CASE("resolve validates and names fields") {
    CHECK(field_of({{"search", {{"c_p", "abc"}}}}) == "search.c_p");
    CHECK(field_of({{"search", {{"num_simulations", 0}}}}) == "search.num_simulations");
    CHECK(field_of({{"search", {{"bogus", 1}}}}) == "search.bogus");
    CHECK(field_of({{"nowhere", {{"x", 1}}}}) == "nowhere");
    CHECK(field_of({{"generation", {{"max_in_flight", 0}}}}) == "generation.max_in_flight");
    CHECK(field_of({{"search", {{"expansion_mode", "sideways"}}}}) == "search.expansion_mode");
    CHECK(field_of({{"search", {{"num_simulations", 7}}}}).empty());
  }

  TEST_CASE("layers override key by key") {
    ConfigDoc base{{"search", {{"c_p", 1.0}, {"num_simulations", 5}}}};
    overlay(base, {{"search", {{"c_p", 2.0}}}});
    const auto cfg = resolve(base);
    CHECK(cfg.search.c_p == 2.0);
    CHECK(cfg.search.num_simulations == 5);
  }

  TEST_CASE("environment layer") {
    ::setenv("SIBTREE_SEARCH_C_P", "0.25", 1);
    ::setenv("SIBTREE_PIPELINE_WORKERS", "3", 1);
    const auto env = environment_layer();
    ::unsetenv("SIBTREE_SEARCH_C_P");
    ::unsetenv("SIBTREE_PIPELINE_WORKERS");
    const auto cfg = resolve(env);
    CHECK(cfg.search.c_p == 0.25);
    CHECK(cfg.pipeline.workers == 3);
  }

  TEST_CASE("rendered config resolves to the same settings") {
    ConfigDoc doc{{"search", {{"num_simulations", 9}, {"answer_markers", {"x", "y"}}}},
                  {"pipeline", {{"checkpoint_dir", "/tmp/ck"}, {"sequential_context", true}}},
                  {"mock", {{"enabled", true}}}};
    const auto cfg = resolve(doc);
    const std::string text = render_config(cfg.to_doc());
    const auto again = resolve(parse_config_text(text, "rendered"));
    CHECK(render_config(again.to_doc()) == text);
    CHECK(again.search.num_simulations == 9);
    CHECK(again.pipeline.checkpoint_dir == std::filesystem::path("/tmp/ck"));
  }

  TEST_CASE("exit codes") {
    testing::TempDir dir;
    testing::write_file(dir / "p.jsonl", testing::problems_jsonl(testing::synthetic_problems(2)));
    const std::string problems = (dir / "p.jsonl").string();
    CHECK(run_cli({"search", "--problems", (dir / "missing.jsonl").string(), "--out", (dir / "t").string(), "--mock"}) ==
          kExitIo);
    CHECK(run_cli({"search", "--problems", problems, "--out", (dir / "t").string(), "--mock", "--cp", "abc"}) ==
          kExitConfig);
    CHECK(run_cli({"search", "--problems", problems, "--out", (dir / "t").string(), "--mock", "--dry-run"}) ==
          kExitOk);
    CHECK_FALSE(std::filesystem::exists(dir / "t"));
    CHECK(run_cli({"search", "--problems", problems, "--out", (dir / "t").string(), "--mock", "--simulations", "6"}) ==
          kExitOk);

    // A dump missing for a listed problem is a partial run.
    std::filesystem::path victim;
    for (const auto& e : std::filesystem::directory_iterator(dir / "t")) {
      if (e.path().string().ends_with(".tree.json")) victim = e.path();
    }
    REQUIRE_FALSE(victim.empty());
    std::filesystem::remove(victim);
    CHECK(run_cli({"refine", "--problems", problems, "--trees", (dir / "t").string(), "--out", (dir / "r").string(),
                   "--mock"}) == kExitPartial);
    CHECK(run_cli({"frobnicate"}) == kExitConfig);
  }

  TEST_CASE("mix and stats commands") {
    testing::TempDir dir;
    testing::write_file(dir / "p.jsonl", testing::problems_jsonl(testing::synthetic_problems(3)));
    const std::string problems = (dir / "p.jsonl").string();
    REQUIRE(run_cli({"ablate", "--variant", "blackbox", "--problems", problems, "--out", (dir / "a.jsonl").string(),
                     "--mock"}) == kExitOk);
    REQUIRE(run_cli({"ablate", "--variant", "mcts-vanilla", "--problems", problems, "--out",
                     (dir / "b.jsonl").string(), "--mock", "--simulations", "6"}) == kExitOk);
    CHECK(std::filesystem::exists(dir / "a.manifest.json"));
    REQUIRE(run_cli({"mix", (dir / "a.jsonl").string() + ":3", (dir / "b.jsonl").string() + ":2", "--out",
                     (dir / "m.jsonl").string()}) == kExitOk);
    CHECK(read_dataset(dir / "m.jsonl").size() == 5);
    CHECK(run_cli({"mix", (dir / "a.jsonl").string() + ":9", "--out", (dir / "x.jsonl").string()}) != kExitOk);
    CHECK(run_cli({"stats", (dir / "m.jsonl").string(), "--json"}) == kExitOk);
  }
}
