// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace sibtree {

struct CallRecord {
  std::int64_t timestamp_ms = 0;
  std::string capability;
  std::string model;
  std::string problem_id;
  int depth = -1;  // step position the call concerns, -1 when not applicable
  std::string prompt_hash;
  std::string prompt;  // kept only in memory, and only when requested
  int prompt_tokens = 0;
  int completion_tokens = 0;
  double latency_ms = 0.0;
  int retries = 0;
  bool ok = true;
  std::string error;
};

/// Thread-safe structured log of backend calls. Optionally mirrored to a JSONL
/// file (timestamp, capability, model, problem_id, depth, prompt_hash, token
/// counts, latency, retries, ok, error). Prompt text and credentials are never
/// written to the file.
class CallLog {
 public:
  struct Options {
    bool keep_in_memory = true;
    bool keep_prompts = false;
    std::optional<std::filesystem::path> jsonl_path;
  };

  CallLog();
  explicit CallLog(Options options);

  void append(CallRecord record);
  std::vector<CallRecord> snapshot() const;
  std::size_t size() const;
  void clear();

 private:
  Options options_;
  mutable std::mutex mutex_;
  std::vector<CallRecord> records_;
  std::ofstream file_;
};

}  // namespace sibtree
