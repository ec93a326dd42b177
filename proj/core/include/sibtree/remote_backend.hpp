// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "sibtree/backend.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <vector>

namespace sibtree {

struct BackendConfig {
  std::string base_url = "https://api.openai.com/v1";  // ".../chat/completions" is appended
  std::string model_name = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_ms = 60000;
  int max_retries = 4;
  int backoff_base_ms = 500;
  int backoff_jitter_ms = 250;
  int max_in_flight = 8;
  int requests_per_minute = 600;

  /// Throws ConfigError; `section` prefixes the field name.
  void validate(const std::string& section = "backend") const;
};

/// Sliding-window limiter on request starts: at most `limit` acquisitions in
/// any window of length `window`.
class RateLimiter {
 public:
  RateLimiter(int limit, std::chrono::milliseconds window);
  void acquire();

 private:
  using clock = std::chrono::steady_clock;
  int limit_;
  std::chrono::milliseconds window_;
  std::mutex mutex_;
  std::deque<clock::time_point> starts_;
};

/// Exponential backoff with jitter, clamped so delays never decrease with the
/// attempt index.
class RetryPolicy {
 public:
  RetryPolicy(int max_retries, int base_ms, int jitter_ms, std::uint64_t seed);

  int max_retries() const noexcept { return max_retries_; }
  /// Delay before retry number `retry` (0-based), given the previous delay.
  int delay_ms(int retry, int previous_ms);

  static constexpr int kMaxDelayMs = 60000;

 private:
  int max_retries_;
  int base_ms_;
  int jitter_ms_;
  std::mt19937_64 rng_;
};

/// OpenAI-compatible chat-completions client. Retries 429, 5xx and transport
/// failures; bounds concurrent requests and request starts per minute.
class RemoteGenerator final : public Generator {
 public:
  explicit RemoteGenerator(BackendConfig config);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string model_name() const override { return config_.model_name; }

  /// Request body for the wire; exposed for tests.
  std::string build_request_body(const GenerationRequest& request) const;
  /// Parses a chat-completions response body. Throws BackendError(malformed_response).
  GenerationResponse parse_response_body(const std::string& body, bool want_logprobs) const;

 private:
  struct Endpoint {
    std::string scheme_host_port;
    std::string path;
  };
  static Endpoint split_url(const std::string& base_url);

  BackendConfig config_;
  Endpoint endpoint_;
  std::counting_semaphore<> in_flight_;
  RateLimiter limiter_;
  std::mutex retry_mutex_;
  std::uint64_t retry_seed_ = 0;
};

}  // namespace sibtree
