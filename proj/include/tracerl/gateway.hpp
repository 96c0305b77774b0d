// Copyright 2026 The tracerl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tracerl/error.hpp"
#include "tracerl/rng.hpp"

namespace tracerl::gateway {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
};

struct CompletionRequest {
  std::string endpoint_id;
  std::string model_name;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  std::string request_tag;
};

struct CompletionResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
  int attempt_count = 1;
};

/// Anything that can answer a chat-completion request.
class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual CompletionResponse complete(const CompletionRequest& req) = 0;
};

class GatewayError : public Error {
 public:
  enum class Kind { EndpointUnknown, ExhaustedRetries, MalformedResponse, InvalidRequest, OfflineCacheMiss };
  GatewayError(Kind kind, const std::string& what, int last_status = 0)
      : Error(what), kind_(kind), last_status_(last_status) {}
  Kind kind() const { return kind_; }
  int last_status() const { return last_status_; }

 private:
  Kind kind_;
  int last_status_;
};

struct EndpointConfig {
  std::string endpoint_id;
  std::string base_url;         // scheme://host[:port]
  std::string api_key_env_var;  // empty: no Authorization header
  std::string model_name;
  std::string reply_text_path = "/choices/0/message/content";  // JSON pointer
  int max_concurrency = 4;
  std::string request_path = "/v1/chat/completions";
};

EndpointConfig endpoint_from_json(const nlohmann::json& j);
/// Accepts a single endpoint object, an array of them, or {"endpoints": [...]}.
std::vector<EndpointConfig> load_endpoint_configs(const std::filesystem::path& path);

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_ms = 1000.0;
  double factor = 2.0;
  double jitter_fraction = 0.25;  // extra delay drawn from [0, fraction * delay)

  /// Delay before attempt `attempt` (2-based; attempt 1 is immediate), without jitter.
  double delay_before_ms(int attempt) const;
};

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;
  RetryPolicy retry;
  bool offline = false;  // cache misses fail instead of reaching the network
  std::uint64_t jitter_seed = 0;
};

struct TransportReply {
  int status = 0;  // 0: no response (connection failure)
  std::string body;
};

/// Sends one HTTP request body to an endpoint.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportReply post(const EndpointConfig& endpoint, const std::string& body) = 0;
};

/// HTTP(S) transport backed by cpp-httplib.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(int timeout_seconds = 60) : timeout_seconds_(timeout_seconds) {}
  TransportReply post(const EndpointConfig& endpoint, const std::string& body) override;

 private:
  int timeout_seconds_;
};

/// In-process endpoint: produces reply text directly, no transport.
class Responder {
 public:
  virtual ~Responder() = default;
  virtual std::string reply(const CompletionRequest& req) = 0;
};

/// Counting semaphore with runtime capacity.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int capacity) : available_(capacity < 1 ? 1 : capacity) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

/// Chat-completion JSON body: {model, messages, temperature, max_tokens}.
nlohmann::json request_body(const CompletionRequest& req);

/// Content-addressed key over endpoint, model, messages, temperature,
/// max_tokens and request tag.
std::string cache_key(const CompletionRequest& req);

class Gateway : public CompletionClient {
 public:
  explicit Gateway(GatewayOptions options = {},
                   std::shared_ptr<Transport> transport = std::make_shared<HttpTransport>());

  void register_endpoint(const EndpointConfig& config);
  void register_responder(const std::string& endpoint_id, std::shared_ptr<Responder> responder,
                          int max_concurrency = 4);
  bool has_endpoint(std::string_view endpoint_id) const;
  /// Model name configured for an HTTP endpoint, empty for responders.
  std::string model_for(std::string_view endpoint_id) const;

  CompletionResponse complete(const CompletionRequest& req) override;

  /// Injected sleep, for tests that count delays.
  void set_sleeper(std::function<void(double ms)> sleeper) { sleeper_ = std::move(sleeper); }

 private:
  struct Endpoint {
    std::optional<EndpointConfig> http;
    std::shared_ptr<Responder> responder;
    std::unique_ptr<ConcurrencyLimiter> limiter;
  };

  std::optional<std::string> cache_lookup(const std::string& key) const;
  void cache_store(const std::string& key, const CompletionRequest& req, const std::string& text) const;
  std::string send_with_retries(const Endpoint& ep, const CompletionRequest& req, int& attempts);
  double jitter(double delay_ms);

  GatewayOptions options_;
  std::shared_ptr<Transport> transport_;
  std::map<std::string, Endpoint, std::less<>> endpoints_;
  std::function<void(double)> sleeper_;
  std::mutex jitter_mu_;
  Rng jitter_rng_;
};

// ---------------------------------------------------------------------------
// Judge reply parsing

class UnparseableJudgeReply : public Error {
 public:
  explicit UnparseableJudgeReply(std::string raw, const std::string& why = "")
      : Error("unparseable judge reply" + (why.empty() ? "" : ": " + why)), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

enum class ScoreSchema { Answer, Dims };
enum class OutOfRange { Reject, Clamp };

struct ParsedScores {
  std::optional<double> score;             // Answer schema
  std::optional<std::array<int, 3>> dims;  // Dims schema: d1 in 0..2, d2 in 0..1, d3 in 0..2
};

/// Answer: the last line of the form `SCORE: x`. Dims: the last `D1:`, `D2:`
/// and `D3:` lines. Other lines are ignored.
ParsedScores parse_scored_reply(std::string_view text, ScoreSchema schema,
                                OutOfRange policy = OutOfRange::Reject);

}  // namespace tracerl::gateway
