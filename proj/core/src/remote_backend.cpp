// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "sibtree/remote_backend.hpp"

#include "sibtree/json_format.hpp"
#include "sibtree/search_config.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

namespace sibtree {

void BackendConfig::validate(const std::string& section) const {
  static const std::regex kUrl(R"(^https?://[^/\s]+(/\S*)?$)");
  if (!std::regex_match(base_url, kUrl)) {
    throw ConfigError(section + ".base_url", "expected http(s)://host[:port][/path], got '" + base_url + "'");
  }
  if (model_name.empty()) throw ConfigError(section + ".model", "must not be empty");
  if (timeout_ms <= 0) throw ConfigError(section + ".timeout_ms", "must be > 0");
  if (max_retries < 0) throw ConfigError(section + ".max_retries", "must be >= 0");
  if (backoff_base_ms < 0) throw ConfigError(section + ".backoff_base_ms", "must be >= 0");
  if (backoff_jitter_ms < 0) throw ConfigError(section + ".backoff_jitter_ms", "must be >= 0");
  if (max_in_flight < 1) throw ConfigError(section + ".max_in_flight", "must be >= 1");
  if (requests_per_minute < 1) throw ConfigError(section + ".requests_per_minute", "must be >= 1");
}

RateLimiter::RateLimiter(int limit, std::chrono::milliseconds window)
    : limit_(std::max(1, limit)), window_(window) {}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = clock::now();
    while (!starts_.empty() && starts_.front() + window_ <= now) starts_.pop_front();
    if (static_cast<int>(starts_.size()) < limit_) {
      starts_.push_back(now);
      return;
    }
    const auto wake = starts_.front() + window_;
    lock.unlock();
    std::this_thread::sleep_until(wake);
    lock.lock();
  }
}

RetryPolicy::RetryPolicy(int max_retries, int base_ms, int jitter_ms, std::uint64_t seed)
    : max_retries_(max_retries), base_ms_(base_ms), jitter_ms_(jitter_ms), rng_(seed) {}

int RetryPolicy::delay_ms(int retry, int previous_ms) {
  const double exponential = static_cast<double>(base_ms_) * std::pow(2.0, std::min(retry, 30));
  int jitter = 0;
  if (jitter_ms_ > 0) jitter = std::uniform_int_distribution<int>(0, jitter_ms_)(rng_);
  const double raw = std::min(exponential + jitter, static_cast<double>(kMaxDelayMs));
  return std::max(previous_ms, static_cast<int>(raw));
}

RemoteGenerator::Endpoint RemoteGenerator::split_url(const std::string& base_url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, kUrl)) {
    throw ConfigError("backend.base_url", "cannot parse '" + base_url + "'");
  }
  std::string path = m[2].str();
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {m[1].str(), path + "/chat/completions"};
}

RemoteGenerator::RemoteGenerator(BackendConfig config)
    : config_(std::move(config)),
      endpoint_(split_url(config_.base_url)),
      in_flight_(std::max(1, config_.max_in_flight)),
      limiter_(config_.requests_per_minute, std::chrono::minutes(1)),
      retry_seed_(std::random_device{}()) {
  config_.validate();
}

std::string RemoteGenerator::build_request_body(const GenerationRequest& request) const {
  ordered_json body;
  body["model"] = config_.model_name;
  ordered_json messages = ordered_json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["n"] = std::max(1, request.num_samples);
  body["logprobs"] = request.want_logprobs;
  if (request.seed) body["seed"] = static_cast<std::int64_t>(*request.seed & 0x7fffffffffffffffULL);
  return body.dump();
}

GenerationResponse RemoteGenerator::parse_response_body(const std::string& body, bool want_logprobs) const {
  GenerationResponse response;
  try {
    const auto doc = nlohmann::json::parse(body);
    const auto& choices = doc.at("choices");
    if (!choices.is_array()) throw std::invalid_argument("choices is not an array");
    for (const auto& choice : choices) {
      GenerationSample sample;
      const auto& content = choice.at("message").at("content");
      sample.text = content.is_null() ? std::string() : content.get<std::string>();
      const nlohmann::json* tokens = nullptr;
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        tokens = &choice["logprobs"]["content"];
      }
      if (tokens && !tokens->empty()) {
        double sum = 0.0;
        for (const auto& t : *tokens) sum += t.at("logprob").get<double>();
        sample.token_count = static_cast<int>(tokens->size());
        sample.mean_logprob = std::min(0.0, sum / static_cast<double>(tokens->size()));
      } else if (want_logprobs) {
        // Rank by response order instead; best_of keeps the earliest on ties.
        response.degraded_scoring = true;
        sample.mean_logprob = 0.0;
      }
      response.samples.push_back(std::move(sample));
    }
    if (doc.contains("usage") && doc["usage"].is_object()) {
      response.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
      response.completion_tokens = doc["usage"].value("completion_tokens", 0);
    }
  } catch (const std::exception& e) {
    throw BackendError(BackendErrc::malformed_response, std::string("malformed chat-completions response: ") + e.what());
  }
  return response;
}

GenerationResponse RemoteGenerator::generate(const GenerationRequest& request) {
  const std::string body = build_request_body(request);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::uint64_t seed = 0;
  {
    std::lock_guard lock(retry_mutex_);
    seed = retry_seed_++;
  }
  RetryPolicy policy(config_.max_retries, config_.backoff_base_ms, config_.backoff_jitter_ms, seed);
  std::vector<int> delays;
  int previous_delay = 0;

  for (int retries = 0;; ++retries) {
    limiter_.acquire();
    httplib::Result result{nullptr, httplib::Error::Unknown};
    {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      httplib::Client client(endpoint_.scheme_host_port);
      const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      result = client.Post(endpoint_.path, headers, body, "application/json");
    }

    BackendErrc failure = BackendErrc::transport;
    std::string message;
    int retry_after_ms = 0;
    if (!result) {
      message = "transport error: " + httplib::to_string(result.error());
    } else if (result->status == 200) {
      GenerationResponse response = parse_response_body(result->body, request.want_logprobs);
      response.retries = retries;
      response.backoff_ms = std::move(delays);
      return response;
    } else if (result->status == 429 || result->status >= 500) {
      failure = result->status == 429 ? BackendErrc::rate_limited : BackendErrc::transport;
      message = fmt::format("HTTP {}", result->status);
      if (result->has_header("Retry-After")) {
        retry_after_ms = static_cast<int>(std::clamp(
            std::atof(result->get_header_value("Retry-After").c_str()) * 1000.0, 0.0,
            static_cast<double>(RetryPolicy::kMaxDelayMs)));
      }
    } else {
      throw BackendError(BackendErrc::transport,
                         fmt::format("HTTP {}: {}", result->status, result->body.substr(0, 200)), retries);
    }

    if (retries >= policy.max_retries()) {
      throw BackendError(failure, fmt::format("{} after {} retries", message, retries), retries);
    }
    int delay = policy.delay_ms(retries, previous_delay);
    delay = std::max(delay, retry_after_ms);
    previous_delay = delay;
    delays.push_back(delay);
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
  }
}

}  // namespace sibtree
