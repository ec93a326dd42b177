// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/checkpoint.hpp"

#include "sibtree/dataset.hpp"

#include <fmt/format.h>
#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>

namespace sibtree {
namespace {

constexpr const char* kFingerprintFile = "RUN";

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += fmt::format(".tmp.{}.{}", static_cast<long>(::getpid()), counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError(PipelineErrc::io_error, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw PipelineError(PipelineErrc::io_error, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw PipelineError(PipelineErrc::io_error, "cannot rename into " + path.string());
  }
}

CheckpointStore::CheckpointStore(std::filesystem::path dir, const std::string& run_fingerprint)
    : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw PipelineError(PipelineErrc::io_error, "cannot create " + dir_.string() + ": " + ec.message());
  const auto marker = dir_ / kFingerprintFile;
  if (std::filesystem::exists(marker)) {
    const std::string existing = read_all(marker);
    if (existing != run_fingerprint) {
      throw PipelineError(PipelineErrc::checkpoint_mismatch,
                          fmt::format("checkpoint directory {} belongs to a run with a different configuration "
                                      "(fingerprint {}, this run {})",
                                      dir_.string(), existing, run_fingerprint));
    }
  } else {
    write_file_atomic(marker, run_fingerprint);
  }
}

std::map<std::string, ProblemCheckpoint> CheckpointStore::load() const {
  std::map<std::string, ProblemCheckpoint> entries;
  for (const auto& file : std::filesystem::directory_iterator(dir_)) {
    if (file.path().extension() != ".json") continue;  // skips RUN and stray temporaries
    try {
      const auto j = nlohmann::json::parse(read_all(file.path()));
      ProblemCheckpoint entry;
      entry.problem_id = j.at("problem_id").get<std::string>();
      entry.ok = j.at("ok").get<bool>();
      entry.error = j.value("error", std::string());
      entry.payload = j.value("payload", std::string());
      entry.tree_dump = j.value("tree_dump", std::string());
      if (j.contains("root_value") && !j["root_value"].is_null()) entry.root_value = j["root_value"].get<double>();
      entries.emplace(entry.problem_id, std::move(entry));
    } catch (const nlohmann::json::exception& e) {
      throw PipelineError(PipelineErrc::parse_error, "corrupt checkpoint " + file.path().string() + ": " + e.what());
    }
  }
  return entries;
}

void CheckpointStore::commit(const ProblemCheckpoint& entry) {
  ordered_json j;
  j["problem_id"] = entry.problem_id;
  j["ok"] = entry.ok;
  j["error"] = entry.error;
  j["payload"] = entry.payload;
  j["tree_dump"] = entry.tree_dump;
  j["root_value"] = entry.root_value ? ordered_json(*entry.root_value) : ordered_json(nullptr);
  std::lock_guard lock(mutex_);
  write_file_atomic(dir_ / (safe_file_stem(entry.problem_id) + ".json"), dump_json_17g(j));
}

}  // namespace sibtree
