// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/json_format.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

namespace sibtree {

/// Outcome of one problem, as persisted.
struct ProblemCheckpoint {
  std::string problem_id;
  bool ok = false;
  std::string error;
  std::string payload;      // stage output when ok: a record line or a refined path
  std::string tree_dump;    // when a tree was built
  std::optional<double> root_value;
};

/// Directory of per-problem status files. Each file is written to a temporary
/// name and renamed into place, so a crash leaves either the complete file or
/// nothing. The directory is bound to a run fingerprint; reopening it with a
/// different configuration is refused.
class CheckpointStore {
 public:
  CheckpointStore(std::filesystem::path dir, const std::string& run_fingerprint);

  /// Everything already completed, keyed by problem id.
  std::map<std::string, ProblemCheckpoint> load() const;
  void commit(const ProblemCheckpoint& entry);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
};

/// Writes `contents` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace sibtree
