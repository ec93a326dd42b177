// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/mock_backend.hpp"

#include "sibtree/hashing.hpp"

#include <fmt/format.h>

#include <array>
#include <charconv>
#include <sstream>

namespace sibtree {
namespace {

constexpr std::array<const char*, 8> kVerbs = {"Rewrite", "Simplify", "Expand", "Isolate",
                                               "Substitute", "Factor", "Compare", "Evaluate"};
constexpr std::array<const char*, 8> kNouns = {"the expression", "both sides", "the sum",
                                               "the product", "the unknown", "the ratio",
                                               "the constraint", "the remainder"};

double default_logprob(std::size_t sample, std::uint64_t h) {
  // Strictly decreasing in the sample index; the jitter stays below the 0.15 gap.
  return -(0.2 + 0.15 * static_cast<double>(sample)) - static_cast<double>((h >> 40) % 1000) / 1e5;
}

int word_count(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  int count = 0;
  while (in >> word) ++count;
  return count;
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

bool matches(const MockRule& rule, const GenerationRequest& request) {
  const RequestContext& ctx = request.context;
  if (rule.capability && *rule.capability != request.capability) return false;
  if (rule.problem_id && *rule.problem_id != ctx.problem_id) return false;
  if (rule.depth && *rule.depth != ctx.depth) return false;
  if (rule.stream && *rule.stream != request.stream) return false;
  if (rule.prefix_first && (ctx.prefix.empty() || ctx.prefix.front() != *rule.prefix_first)) return false;
  if (rule.prefix_contains) {
    bool found = false;
    for (const auto& step : ctx.prefix) found = found || step.find(*rule.prefix_contains) != std::string::npos;
    if (!found) return false;
  }
  if (rule.focus_contains && ctx.focus.find(*rule.focus_contains) == std::string::npos) return false;
  return true;
}

GenerationResponse finish(std::vector<GenerationSample> samples, const GenerationRequest& request) {
  GenerationResponse response;
  for (const auto& message : request.messages) response.prompt_tokens += word_count(message.content);
  for (auto& sample : samples) {
    sample.token_count = word_count(sample.text);
    response.completion_tokens += sample.token_count;
  }
  response.samples = std::move(samples);
  return response;
}

Capability parse_capability(const std::string& text) {
  if (text == "step") return Capability::step;
  if (text == "critique") return Capability::critique;
  if (text == "revise") return Capability::revise;
  if (text == "blackbox") return Capability::blackbox;
  throw std::invalid_argument("unknown capability '" + text + "'");
}

}  // namespace

std::string mock_wrong_answer(const std::string& reference) {
  long long value = 0;
  const char* first = reference.data();
  const char* last = reference.data() + reference.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec == std::errc() && ptr == last) return std::to_string(value + 1);
  return reference + "'";
}

MockScript MockScript::from_json(const nlohmann::json& j) {
  MockScript script;
  script.seed = j.value("seed", std::uint64_t{0});
  script.correct_rate = j.value("correct_rate", script.correct_rate);
  script.max_steps = j.value("max_steps", script.max_steps);
  for (const auto& r : j.value("rules", nlohmann::json::array())) {
    MockRule rule;
    if (r.contains("capability")) rule.capability = parse_capability(r.at("capability").get<std::string>());
    if (r.contains("problem_id")) rule.problem_id = r.at("problem_id").get<std::string>();
    if (r.contains("depth")) rule.depth = r.at("depth").get<int>();
    if (r.contains("prefix_first")) rule.prefix_first = r.at("prefix_first").get<std::string>();
    if (r.contains("prefix_contains")) rule.prefix_contains = r.at("prefix_contains").get<std::string>();
    if (r.contains("focus_contains")) rule.focus_contains = r.at("focus_contains").get<std::string>();
    if (r.contains("stream")) rule.stream = r.at("stream").get<int>();
    rule.outputs = r.value("outputs", std::vector<std::string>{});
    rule.logprobs = r.value("logprobs", std::vector<double>{});
    rule.fail = r.value("fail", false);
    rule.empty = r.value("empty", false);
    if (!rule.fail && !rule.empty && rule.outputs.empty()) {
      throw std::invalid_argument("mock rule needs outputs unless it fails or is empty");
    }
    script.rules.push_back(std::move(rule));
  }
  return script;
}

MockGenerator::MockGenerator(MockScript script, std::string model_name)
    : script_(std::move(script)), model_name_(std::move(model_name)) {}

std::uint64_t MockGenerator::fingerprint(const GenerationRequest& request, int sample) const {
  const RequestContext& ctx = request.context;
  std::string key = fmt::format("{}\x1f{}\x1f{}\x1f{}\x1f{}", script_.seed, to_string(request.capability),
                                ctx.problem_id, ctx.question, ctx.depth);
  for (const auto& s : ctx.prefix) key += "\x1fP" + s;
  key += "\x1f" "F" + ctx.focus;
  for (const auto& s : ctx.others) key += "\x1fO" + s;
  // Greedy decoding ignores the sampling seed.
  if (request.temperature > 0.0 && request.seed) key += fmt::format("\x1fS{}", *request.seed);
  key += fmt::format("\x1fT{}", request.stream);
  return mix64(stable_hash64(key), static_cast<std::uint64_t>(sample));
}

GenerationResponse MockGenerator::generate(const GenerationRequest& request) {
  calls_.fetch_add(1);
  for (const MockRule& rule : script_.rules) {
    if (matches(rule, request)) return scripted(rule, request);
  }
  switch (request.capability) {
    case Capability::step: return default_step(request);
    case Capability::critique: return default_critique(request);
    case Capability::revise: return default_revise(request);
    case Capability::blackbox: return default_blackbox(request);
  }
  throw BackendError(BackendErrc::malformed_response, "unknown capability");
}

GenerationResponse MockGenerator::scripted(const MockRule& rule, const GenerationRequest& request) const {
  if (rule.fail) {
    throw BackendError(BackendErrc::scripted_failure,
                       fmt::format("scripted failure for {} call on '{}'", to_string(request.capability),
                                   request.context.problem_id));
  }
  std::vector<GenerationSample> samples;
  const int k = std::max(1, request.num_samples);
  for (int j = 0; j < k; ++j) {
    GenerationSample sample;
    if (!rule.empty) {
      std::string text = rule.outputs[static_cast<std::size_t>(j) % rule.outputs.size()];
      replace_all(text, "{stream}", std::to_string(request.stream));
      replace_all(text, "{sample}", std::to_string(j));
      replace_all(text, "{depth}", std::to_string(request.context.depth));
      replace_all(text, "{answer}", request.context.reference_answer);
      replace_all(text, "{focus}", request.context.focus);
      sample.text = std::move(text);
    }
    sample.mean_logprob = static_cast<std::size_t>(j) < rule.logprobs.size()
                              ? rule.logprobs[static_cast<std::size_t>(j)]
                              : -(0.2 + 0.15 * j);
    samples.push_back(std::move(sample));
  }
  return finish(std::move(samples), request);
}

GenerationResponse MockGenerator::default_step(const GenerationRequest& request) const {
  const RequestContext& ctx = request.context;
  const int depth = ctx.depth;
  std::vector<GenerationSample> samples;
  const int k = std::max(1, request.num_samples);
  for (int j = 0; j < k; ++j) {
    const std::uint64_t h = fingerprint(request, j);
    const bool final_step =
        depth >= script_.max_steps || (depth >= 2 && static_cast<int>(h % 100) < 20 + 15 * depth);
    GenerationSample sample;
    if (final_step) {
      const bool correct = static_cast<double>((h >> 16) % 1000) < script_.correct_rate * 1000.0;
      const std::string answer = correct ? ctx.reference_answer : mock_wrong_answer(ctx.reference_answer);
      sample.text = fmt::format("Combining the previous steps, the answer is \\boxed{{{}}}.", answer);
    } else {
      sample.text = fmt::format("Step {}: {} {} ({:06x}).", depth, kVerbs[h % kVerbs.size()],
                                kNouns[(h >> 8) % kNouns.size()], (h >> 24) & 0xffffff);
    }
    sample.mean_logprob = default_logprob(static_cast<std::size_t>(j), h);
    samples.push_back(std::move(sample));
  }
  return finish(std::move(samples), request);
}

GenerationResponse MockGenerator::default_critique(const GenerationRequest& request) const {
  const std::uint64_t h = fingerprint(request, 0);
  const auto& others = request.context.others;
  GenerationSample sample;
  if (others.empty()) {
    sample.text = fmt::format(
        "CRITIQUE[{:08x}]: no alternatives to compare; state the justification for this step explicitly.",
        h >> 32);
  } else {
    sample.text = fmt::format(
        "CRITIQUE[{:08x}]: compared with {} alternative(s), justify the computation and avoid the "
        "ambiguity present in alternative 1.",
        h >> 32, others.size());
  }
  return finish({std::move(sample)}, request);
}

GenerationResponse MockGenerator::default_revise(const GenerationRequest& request) const {
  const RequestContext& ctx = request.context;
  const std::string gradient = ctx.others.empty() ? std::string() : ctx.others.front();
  GenerationSample sample;
  if (gradient.find("NO_CHANGE") != std::string::npos) {
    sample.text = ctx.focus;
  } else {
    sample.text = fmt::format("{} [revised:{:08x}]", ctx.focus, fingerprint(request, 0) >> 32);
  }
  return finish({std::move(sample)}, request);
}

GenerationResponse MockGenerator::default_blackbox(const GenerationRequest& request) const {
  const RequestContext& ctx = request.context;
  const std::uint64_t h = fingerprint(request, 0);
  const int steps = 2 + static_cast<int>(h % 3);
  std::string text;
  for (int i = 1; i <= steps; ++i) {
    const std::uint64_t hi = mix64(h, static_cast<std::uint64_t>(i));
    text += fmt::format("Step {}: {} {}.\n\n", i, kVerbs[hi % kVerbs.size()], kNouns[(hi >> 8) % kNouns.size()]);
  }
  const bool correct = static_cast<double>((h >> 16) % 1000) < script_.correct_rate * 1000.0;
  text += fmt::format("The answer is \\boxed{{{}}}.",
                      correct ? ctx.reference_answer : mock_wrong_answer(ctx.reference_answer));
  GenerationSample sample;
  sample.text = std::move(text);
  return finish({std::move(sample)}, request);
}

}  // namespace sibtree
