// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/dataset.hpp"

#include "sibtree/checkpoint.hpp"
#include "sibtree/hashing.hpp"

#include <fmt/format.h>

#include <cctype>
#include <fstream>
#include <set>

namespace sibtree {
namespace {

bool blank(const std::string& line) {
  for (unsigned char c : line) {
    if (!std::isspace(c)) return false;
  }
  return true;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError(PipelineErrc::io_error, "cannot open " + path.string());
  return in;
}

std::string text_field(const nlohmann::json& j, const char* key, int line) {
  if (!j.contains(key)) {
    throw PipelineError(PipelineErrc::parse_error, fmt::format("line {}: missing field '{}'", line, key), line);
  }
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw PipelineError(PipelineErrc::parse_error, fmt::format("line {}: field '{}' must be a string", line, key),
                      line);
}

}  // namespace

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::sigma: return "sigma";
    case Variant::mcts_vanilla: return "mcts-vanilla";
    case Variant::blackbox: return "blackbox";
  }
  return "unknown";
}

Variant parse_variant(const std::string& text) {
  if (text == "sigma") return Variant::sigma;
  if (text == "mcts-vanilla") return Variant::mcts_vanilla;
  if (text == "blackbox") return Variant::blackbox;
  throw std::invalid_argument("unknown variant '" + text + "' (expected sigma, mcts-vanilla or blackbox)");
}

ordered_json to_json(const DatasetRecord& record) {
  ordered_json j;
  j["record_id"] = record.record_id;
  j["problem_id"] = record.problem_id;
  j["query"] = record.query;
  j["response"] = record.response;
  j["variant"] = to_string(record.variant);
  j["metadata"] = record.metadata;
  return j;
}

DatasetRecord record_from_json(const ordered_json& j) {
  DatasetRecord record;
  record.record_id = j.at("record_id").get<std::string>();
  record.problem_id = j.at("problem_id").get<std::string>();
  record.query = j.at("query").get<std::string>();
  record.response = j.at("response").get<std::string>();
  record.variant = parse_variant(j.at("variant").get<std::string>());
  record.metadata = j.value("metadata", ordered_json::object());
  return record;
}

std::string to_jsonl_line(const DatasetRecord& record) { return to_json(record).dump(); }

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& record : records) {
    out += to_jsonl_line(record);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<DatasetRecord> records;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    try {
      records.push_back(record_from_json(ordered_json::parse(line)));
    } catch (const std::exception& e) {
      throw PipelineError(PipelineErrc::parse_error,
                          fmt::format("{}:{}: bad dataset record: {}", path.string(), number, e.what()), number);
    }
  }
  return records;
}

IngestResult ingest_problems(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  IngestResult result;
  std::map<std::string, int> seen;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) {
      ++result.blank_lines_skipped;
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw PipelineError(PipelineErrc::parse_error, fmt::format("line {}: {}", number, e.what()), number);
    }
    if (!j.is_object()) {
      throw PipelineError(PipelineErrc::parse_error, fmt::format("line {}: expected a JSON object", number), number);
    }
    Problem p;
    p.id = text_field(j, "id", number);
    p.question = text_field(j, "question", number);
    p.reference_answer = text_field(j, "answer", number);
    if (j.contains("source") && !j["source"].is_null()) p.source = text_field(j, "source", number);
    if (p.id.empty()) {
      throw PipelineError(PipelineErrc::parse_error, fmt::format("line {}: empty id", number), number);
    }
    if (blank(p.question)) {
      throw PipelineError(PipelineErrc::empty_question,
                          fmt::format("line {}: problem '{}' has an empty question", number, p.id), number);
    }
    if (auto [it, inserted] = seen.emplace(p.id, number); !inserted) {
      throw PipelineError(PipelineErrc::duplicate_id,
                          fmt::format("line {}: duplicate id '{}' (first seen on line {})", number, p.id, it->second),
                          number);
    }
    result.problems.push_back(std::move(p));
  }
  return result;
}

std::string safe_file_stem(const std::string& problem_id) {
  std::string stem;
  for (unsigned char c : problem_id) {
    if (stem.size() >= 64) break;
    stem.push_back(std::isalnum(c) || c == '-' || c == '_' || c == '.' ? static_cast<char>(c) : '_');
  }
  // The hash suffix keeps "a/b" and "a_b" apart.
  return stem + "-" + sha256_hex(problem_id).substr(0, 10);
}

std::vector<DatasetRecord> mix(const std::vector<MixInput>& inputs) {
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const MixInput& input = inputs[i];
    std::vector<DatasetRecord> records = read_dataset(input.path);
    if (input.count > records.size()) {
      throw PipelineError(PipelineErrc::insufficient_records,
                          fmt::format("{} has {} records, {} requested", input.path.string(), records.size(),
                                      input.count));
    }
    const std::string stem = input.path.stem().string();
    for (std::size_t r = 0; r < input.count; ++r) {
      DatasetRecord record = std::move(records[r]);
      record.record_id = fmt::format("{}:{}/{}", i, stem, record.record_id);
      if (!ids.insert(record.record_id).second) {
        throw PipelineError(PipelineErrc::id_collision, "duplicate record id " + record.record_id);
      }
      out.push_back(std::move(record));
    }
  }
  return out;
}

}  // namespace sibtree
