// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/backend.hpp"

#include <chrono>
#include <cctype>

namespace sibtree {
namespace {

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<std::string> to_vector(std::span<const std::string> items) {
  return {items.begin(), items.end()};
}

}  // namespace

std::string to_string(Capability capability) {
  switch (capability) {
    case Capability::step: return "step";
    case Capability::critique: return "critique";
    case Capability::revise: return "revise";
    case Capability::blackbox: return "blackbox";
  }
  return "unknown";
}

std::size_t best_of_index(std::span<const GenerationSample> samples) {
  if (samples.empty()) throw BackendError(BackendErrc::empty_list, "best_of over an empty sample list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].mean_logprob > samples[best].mean_logprob) best = i;
  }
  return best;
}

const GenerationSample& best_of(std::span<const GenerationSample> samples) {
  return samples[best_of_index(samples)];
}

std::string extract_fenced_block(std::string_view text) {
  const std::size_t open = text.find("```");
  if (open == std::string_view::npos) return trim(text);
  std::size_t body = text.find('\n', open + 3);
  if (body == std::string_view::npos) return trim(text);
  ++body;
  const std::size_t close = text.find("```", body);
  if (close == std::string_view::npos) return trim(text);
  return trim(text.substr(body, close - body));
}

ModelBackend::ModelBackend(std::shared_ptr<Generator> generator, PromptTemplates templates,
                           std::shared_ptr<CallLog> log)
    : ModelBackend(std::move(generator), std::move(templates), std::move(log), Options{}) {}

ModelBackend::ModelBackend(std::shared_ptr<Generator> generator, PromptTemplates templates,
                           std::shared_ptr<CallLog> log, Options options)
    : generator_(std::move(generator)),
      templates_(std::move(templates)),
      log_(std::move(log)),
      options_(options) {}

GenerationResponse ModelBackend::call(GenerationRequest request, const RenderedPrompt& prompt) {
  request.messages.clear();
  if (!prompt.system.empty()) request.messages.push_back({"system", prompt.system});
  request.messages.push_back({"user", prompt.user});
  request.prompt_hash = prompt.hash;

  CallRecord record;
  record.timestamp_ms = now_ms();
  record.capability = to_string(request.capability);
  record.model = generator_->model_name();
  record.problem_id = request.context.problem_id;
  record.depth = request.context.depth;
  record.prompt_hash = prompt.hash;
  if (log_) record.prompt = prompt.system + "\n" + prompt.user;

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    GenerationResponse response = generator_->generate(request);
    if (response.degraded_scoring) degraded_.store(true);
    if (log_) {
      record.latency_ms = elapsed();
      record.retries = response.retries;
      record.prompt_tokens = response.prompt_tokens;
      record.completion_tokens = response.completion_tokens;
      log_->append(std::move(record));
    }
    return response;
  } catch (const BackendError& e) {
    if (log_) {
      record.latency_ms = elapsed();
      record.retries = e.retries();
      record.ok = false;
      record.error = e.what();
      log_->append(std::move(record));
    }
    throw;
  }
}

RenderedPrompt ModelBackend::render_step_prompt(const Problem& problem,
                                                std::span<const std::string> prefix) const {
  PromptVars vars;
  vars.scalars["problem"] = problem.question;
  vars.lists["steps"] = to_vector(prefix);
  return render(templates_.step, vars);
}

RenderedPrompt ModelBackend::render_critique_prompt(const Problem& problem, std::string_view selected,
                                                    std::span<const std::string> siblings,
                                                    std::span<const std::string> context_steps) const {
  PromptVars vars;
  vars.scalars["problem"] = problem.question;
  vars.scalars["selected_step"] = std::string(selected);
  vars.lists["siblings"] = to_vector(siblings);
  vars.lists["context"] = to_vector(context_steps);
  return render(templates_.critique, vars);
}

RenderedPrompt ModelBackend::render_revise_prompt(const Problem& problem, std::string_view selected,
                                                  std::string_view gradient,
                                                  std::span<const std::string> context_steps) const {
  PromptVars vars;
  vars.scalars["problem"] = problem.question;
  vars.scalars["selected_step"] = std::string(selected);
  vars.scalars["gradient"] = std::string(gradient);
  vars.lists["context"] = to_vector(context_steps);
  return render(templates_.revise, vars);
}

RenderedPrompt ModelBackend::render_blackbox_prompt(const Problem& problem) const {
  PromptVars vars;
  vars.scalars["problem"] = problem.question;
  return render(templates_.blackbox, vars);
}

std::vector<GenerationSample> ModelBackend::sample_steps(const Problem& problem,
                                                         std::span<const std::string> prefix,
                                                         const StepSampling& sampling) {
  GenerationRequest request;
  request.capability = Capability::step;
  request.temperature = sampling.temperature;
  request.max_tokens = sampling.max_tokens;
  request.num_samples = sampling.k;
  request.want_logprobs = true;
  request.seed = sampling.seed;
  request.stream = sampling.stream;
  request.context.problem_id = problem.id;
  request.context.question = problem.question;
  request.context.reference_answer = problem.reference_answer;
  request.context.depth = static_cast<int>(prefix.size()) + 1;
  request.context.prefix = to_vector(prefix);

  GenerationResponse response = call(std::move(request), render_step_prompt(problem, prefix));
  std::vector<GenerationSample> usable;
  usable.reserve(response.samples.size());
  for (auto& sample : response.samples) {
    sample.text = trim(sample.text);
    if (!sample.text.empty()) usable.push_back(std::move(sample));
  }
  return usable;
}

TextResult ModelBackend::critique(const Problem& problem, int depth, std::string_view selected,
                                  std::span<const std::string> siblings,
                                  std::span<const std::string> context_steps) {
  GenerationRequest request;
  request.capability = Capability::critique;
  request.temperature = options_.critique_temperature;
  request.max_tokens = options_.critique_max_tokens;
  request.context.problem_id = problem.id;
  request.context.question = problem.question;
  request.context.reference_answer = problem.reference_answer;
  request.context.depth = depth;
  request.context.prefix = to_vector(context_steps);
  request.context.focus = std::string(selected);
  request.context.others = to_vector(siblings);

  const RenderedPrompt prompt = render_critique_prompt(problem, selected, siblings, context_steps);
  GenerationResponse response = call(std::move(request), prompt);
  std::string text = response.samples.empty() ? std::string() : trim(response.samples.front().text);
  if (text.empty()) throw BackendError(BackendErrc::malformed_response, "critique came back empty");
  return {std::move(text), prompt.hash};
}

TextResult ModelBackend::revise(const Problem& problem, int depth, std::string_view selected,
                                std::string_view gradient,
                                std::span<const std::string> context_steps) {
  GenerationRequest request;
  request.capability = Capability::revise;
  request.temperature = options_.revise_temperature;
  request.max_tokens = options_.revise_max_tokens;
  request.context.problem_id = problem.id;
  request.context.question = problem.question;
  request.context.reference_answer = problem.reference_answer;
  request.context.depth = depth;
  request.context.prefix = to_vector(context_steps);
  request.context.focus = std::string(selected);
  request.context.others = {std::string(gradient)};

  const RenderedPrompt prompt = render_revise_prompt(problem, selected, gradient, context_steps);
  GenerationResponse response = call(std::move(request), prompt);
  std::string text =
      response.samples.empty() ? std::string() : extract_fenced_block(response.samples.front().text);
  if (text.empty()) throw BackendError(BackendErrc::revision_empty, "revision came back empty");
  return {std::move(text), prompt.hash};
}

std::string ModelBackend::blackbox_cot(const Problem& problem, double temperature, std::uint64_t seed) {
  GenerationRequest request;
  request.capability = Capability::blackbox;
  request.temperature = temperature;
  request.max_tokens = options_.blackbox_max_tokens;
  request.seed = seed;
  request.context.problem_id = problem.id;
  request.context.question = problem.question;
  request.context.reference_answer = problem.reference_answer;

  GenerationResponse response = call(std::move(request), render_blackbox_prompt(problem));
  return response.samples.empty() ? std::string() : trim(response.samples.front().text);
}

}  // namespace sibtree
