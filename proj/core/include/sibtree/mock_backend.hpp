// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/backend.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sibtree {

/// A scripted response. All present match fields must hold; the first
/// matching rule in script order wins. Output strings may use the
/// placeholders {stream}, {sample}, {depth}, {answer} and {focus}.
struct MockRule {
  std::optional<Capability> capability;
  std::optional<std::string> problem_id;
  std::optional<int> depth;
  std::optional<std::string> prefix_first;     // first earlier step equals this
  std::optional<std::string> prefix_contains;  // some earlier step contains this
  std::optional<std::string> focus_contains;
  std::optional<int> stream;

  std::vector<std::string> outputs;  // sample j takes outputs[j % size]
  std::vector<double> logprobs;      // optional, per sample; default strictly decreasing
  bool fail = false;                 // throw BackendError(scripted_failure)
  bool empty = false;                // return empty completions
};

/// Deterministic scenario table. Same script plus same requests gives the
/// same outputs regardless of call order or thread interleaving: outputs are
/// a pure function of (seed, request content, request seed, stream).
struct MockScript {
  std::uint64_t seed = 0;
  std::vector<MockRule> rules;
  // Default step behaviour when no rule matches.
  double correct_rate = 0.6;  // chance a final step states the right answer
  int max_steps = 6;          // solutions always finish by this depth

  static MockScript from_json(const nlohmann::json& j);
};

class MockGenerator final : public Generator {
 public:
  explicit MockGenerator(MockScript script, std::string model_name = "mock-model");

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string model_name() const override { return model_name_; }

  std::size_t call_count() const noexcept { return calls_.load(); }

 private:
  GenerationResponse default_step(const GenerationRequest& request) const;
  GenerationResponse default_critique(const GenerationRequest& request) const;
  GenerationResponse default_revise(const GenerationRequest& request) const;
  GenerationResponse default_blackbox(const GenerationRequest& request) const;
  GenerationResponse scripted(const MockRule& rule, const GenerationRequest& request) const;
  std::uint64_t fingerprint(const GenerationRequest& request, int sample) const;

  MockScript script_;
  std::string model_name_;
  std::atomic<std::size_t> calls_{0};
};

/// The wrong answer the default mock produces for a reference answer.
std::string mock_wrong_answer(const std::string& reference);

}  // namespace sibtree
