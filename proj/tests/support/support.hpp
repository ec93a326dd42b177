// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

// Fixtures shared by the unit and acceptance tests.

#pragma once

#include <sibtree/backend.hpp>
#include <sibtree/call_log.hpp>
#include <sibtree/mock_backend.hpp>
#include <sibtree/tree.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace sibtree::testing {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

/// "p00".."p<n-1>": "What is i + i?" with answer 2i.
std::vector<Problem> synthetic_problems(int n, const std::string& prefix = "p");
std::string problems_jsonl(const std::vector<Problem>& problems);

/// Mock generator wired into a ModelBackend with an in-memory call log that
/// keeps prompts.
struct MockRig {
  std::shared_ptr<CallLog> log;
  std::shared_ptr<MockGenerator> generator;
  std::unique_ptr<ModelBackend> backend;
};
MockRig make_mock(MockScript script = {}, const std::string& model_name = "mock-model");

/// Scenario with three root children "Try method 0/1/2" in which only the
/// continuation of method 1 reaches the reference answer.
MockScript one_correct_branch_script();

/// Random tree with a visited root: depth <= max_depth, 1..max_branching
/// children per expanded node, values on a coarse grid so ties are common.
/// Step texts are unique per node.
ReasoningTree random_tree(std::mt19937_64& rng, int max_depth, int max_branching);

/// Minimal OpenAI-style chat-completions server on 127.0.0.1 for client
/// tests. Statuses are served in order, then `fallback_status` forever.
class FakeChatServer {
 public:
  struct Options {
    int latency_ms = 0;
    std::vector<int> statuses;
    int fallback_status = 200;
    bool include_logprobs = true;
  };

  explicit FakeChatServer(Options options);
  ~FakeChatServer();

  std::string base_url() const;
  int requests() const { return requests_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }
  std::vector<std::chrono::steady_clock::time_point> request_starts() const;
  std::string last_body() const;
  std::string last_authorization() const;

 private:
  Options options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  mutable std::mutex mutex_;
  std::vector<std::chrono::steady_clock::time_point> starts_;
  std::string last_body_;
  std::string last_authorization_;
};

}  // namespace sibtree::testing
