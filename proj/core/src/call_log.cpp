// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/call_log.hpp"

#include "sibtree/json_format.hpp"

#include <stdexcept>

namespace sibtree {

CallLog::CallLog() : CallLog(Options{}) {}

CallLog::CallLog(Options options) : options_(std::move(options)) {
  if (options_.jsonl_path) {
    file_.open(*options_.jsonl_path, std::ios::app);
    if (!file_) throw std::runtime_error("cannot open call log " + options_.jsonl_path->string());
  }
}

void CallLog::append(CallRecord record) {
  if (!options_.keep_prompts) record.prompt.clear();
  std::lock_guard lock(mutex_);
  if (file_.is_open()) {
    ordered_json line;
    line["timestamp_ms"] = record.timestamp_ms;
    line["capability"] = record.capability;
    line["model"] = record.model;
    line["problem_id"] = record.problem_id;
    line["depth"] = record.depth;
    line["prompt_hash"] = record.prompt_hash;
    line["prompt_tokens"] = record.prompt_tokens;
    line["completion_tokens"] = record.completion_tokens;
    line["latency_ms"] = record.latency_ms;
    line["retries"] = record.retries;
    line["ok"] = record.ok;
    if (!record.ok) line["error"] = record.error;
    file_ << line.dump() << '\n';
    file_.flush();
  }
  if (options_.keep_in_memory) records_.push_back(std::move(record));
}

std::vector<CallRecord> CallLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t CallLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

void CallLog::clear() {
  std::lock_guard lock(mutex_);
  records_.clear();
}

}  // namespace sibtree
