// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/call_log.hpp"
#include "sibtree/prompts.hpp"
#include "sibtree/tree.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sibtree {

enum class Capability { step, critique, revise, blackbox };

std::string to_string(Capability capability);

enum class BackendErrc {
  transport,           // connection failure or retryable status after the retry budget
  rate_limited,        // HTTP 429 after the retry budget
  malformed_response,  // unparseable body or missing fields
  revision_empty,      // revise produced no usable text
  empty_list,          // best_of over no samples
  scripted_failure,    // mock rule asked to fail
};

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrc code, const std::string& message, int retries = 0)
      : std::runtime_error(message), code_(code), retries_(retries) {}
  BackendErrc code() const noexcept { return code_; }
  int retries() const noexcept { return retries_; }

 private:
  BackendErrc code_;
  int retries_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

/// Structured view of what a request is about. Not sent over the wire; it
/// feeds the call log and lets the mock key its outputs on content rather
/// than on prompt wording.
struct RequestContext {
  std::string problem_id;
  std::string question;
  std::string reference_answer;
  int depth = -1;
  std::vector<std::string> prefix;  // earlier steps shown to the model
  std::string focus;                // step being sampled after / critiqued / revised
  std::vector<std::string> others;  // siblings (critique) or the gradient (revise)
};

struct GenerationRequest {
  Capability capability = Capability::step;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 256;
  int num_samples = 1;
  bool want_logprobs = false;
  std::optional<std::uint64_t> seed;
  int stream = 0;  // independent draw index for repeated identical prompts
  std::string prompt_hash;
  RequestContext context;
};

struct GenerationSample {
  std::string text;
  double mean_logprob = 0.0;  // <= 0
  int token_count = 0;
};

struct GenerationResponse {
  std::vector<GenerationSample> samples;
  int retries = 0;
  bool degraded_scoring = false;  // log-probs were unavailable
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::vector<int> backoff_ms;  // delay slept before each retry
};

/// Transport-level generator: one request in, samples out. Implementations
/// must be safe for concurrent use.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
  virtual std::string model_name() const = 0;
};

/// Index of the sample with maximal mean_logprob, earliest on ties.
/// Throws BackendError(empty_list).
std::size_t best_of_index(std::span<const GenerationSample> samples);
const GenerationSample& best_of(std::span<const GenerationSample> samples);

/// Inner text of the first fenced code block, or the trimmed input when there
/// is no complete fence.
std::string extract_fenced_block(std::string_view text);

struct StepSampling {
  int k = 1;
  double temperature = 0.7;
  int max_tokens = 256;
  std::uint64_t seed = 0;
  int stream = 0;
};

struct TextResult {
  std::string text;
  std::string prompt_hash;
};

/// The four generation capabilities, rendered from versioned templates and
/// logged per call. Safe for concurrent use when the generator is.
class ModelBackend {
 public:
  struct Options {
    double critique_temperature = 0.0;
    double revise_temperature = 0.0;
    int critique_max_tokens = 512;
    int revise_max_tokens = 512;
    int blackbox_max_tokens = 2048;
  };

  ModelBackend(std::shared_ptr<Generator> generator, PromptTemplates templates,
               std::shared_ptr<CallLog> log = nullptr);
  ModelBackend(std::shared_ptr<Generator> generator, PromptTemplates templates,
               std::shared_ptr<CallLog> log, Options options);

  /// Up to k samples of the next step after `prefix`. Empty completions are
  /// dropped, so fewer than k may come back.
  std::vector<GenerationSample> sample_steps(const Problem& problem,
                                             std::span<const std::string> prefix,
                                             const StepSampling& sampling);

  /// `context_steps` is normally empty; it carries earlier steps when the
  /// caller opts into sequential-context refinement.
  TextResult critique(const Problem& problem, int depth, std::string_view selected,
                      std::span<const std::string> siblings,
                      std::span<const std::string> context_steps = {});

  /// Throws BackendError(revision_empty) when nothing usable comes back.
  TextResult revise(const Problem& problem, int depth, std::string_view selected,
                    std::string_view gradient, std::span<const std::string> context_steps = {});

  std::string blackbox_cot(const Problem& problem, double temperature, std::uint64_t seed);

  RenderedPrompt render_step_prompt(const Problem& problem,
                                    std::span<const std::string> prefix) const;
  RenderedPrompt render_critique_prompt(const Problem& problem, std::string_view selected,
                                        std::span<const std::string> siblings,
                                        std::span<const std::string> context_steps = {}) const;
  RenderedPrompt render_revise_prompt(const Problem& problem, std::string_view selected,
                                      std::string_view gradient,
                                      std::span<const std::string> context_steps = {}) const;
  RenderedPrompt render_blackbox_prompt(const Problem& problem) const;

  const PromptTemplates& templates() const noexcept { return templates_; }
  std::string model_name() const { return generator_->model_name(); }
  const std::shared_ptr<CallLog>& call_log() const noexcept { return log_; }
  /// Set once any response arrived without log-probs.
  bool degraded_scoring() const noexcept { return degraded_.load(); }

 private:
  GenerationResponse call(GenerationRequest request, const RenderedPrompt& prompt);

  std::shared_ptr<Generator> generator_;
  PromptTemplates templates_;
  std::shared_ptr<CallLog> log_;
  Options options_;
  std::atomic<bool> degraded_{false};
};

}  // namespace sibtree
