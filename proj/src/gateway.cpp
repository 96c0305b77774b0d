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

#include "tracerl/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "tracerl/io.hpp"

namespace tracerl::gateway {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool retryable(int status) { return status == 0 || status == 429 || (status >= 500 && status < 600); }

class LimiterGuard {
 public:
  explicit LimiterGuard(ConcurrencyLimiter& l) : l_(l) { l_.acquire(); }
  ~LimiterGuard() { l_.release(); }
  LimiterGuard(const LimiterGuard&) = delete;
  LimiterGuard& operator=(const LimiterGuard&) = delete;

 private:
  ConcurrencyLimiter& l_;
};

// Value after `label` on a line starting with it, else nullopt.
std::optional<std::string_view> labeled_value(std::string_view line, std::string_view label) {
  auto t = trim(line);
  if (t.size() < label.size()) return std::nullopt;
  for (size_t i = 0; i < label.size(); ++i) {
    if (std::toupper(static_cast<unsigned char>(t[i])) != label[i]) return std::nullopt;
  }
  return trim(t.substr(label.size()));
}

std::optional<double> parse_number(std::string_view s) {
  std::string buf(s);
  if (buf.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  std::string buf(s);
  if (buf.empty()) return std::nullopt;
  char* end = nullptr;
  const long v = std::strtol(buf.c_str(), &end, 10);
  if (end != buf.c_str() + buf.size()) return std::nullopt;
  return static_cast<int>(v);
}

}  // namespace

EndpointConfig endpoint_from_json(const nlohmann::json& j) {
  EndpointConfig c;
  c.endpoint_id = j.at("endpoint_id").get<std::string>();
  c.base_url = j.at("base_url").get<std::string>();
  c.api_key_env_var = j.value("api_key_env_var", std::string());
  c.model_name = j.value("model_name", std::string());
  c.reply_text_path = j.value("reply_text_path", c.reply_text_path);
  c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
  c.request_path = j.value("request_path", c.request_path);
  return c;
}

std::vector<EndpointConfig> load_endpoint_configs(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(io::read_file(path));
  std::vector<EndpointConfig> out;
  const nlohmann::json& list = j.is_object() && j.contains("endpoints") ? j.at("endpoints") : j;
  if (list.is_array()) {
    for (const auto& e : list) out.push_back(endpoint_from_json(e));
  } else {
    out.push_back(endpoint_from_json(list));
  }
  return out;
}

double RetryPolicy::delay_before_ms(int attempt) const {
  if (attempt <= 1) return 0.0;
  return base_delay_ms * std::pow(factor, attempt - 2);
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

TransportReply HttpTransport::post(const EndpointConfig& endpoint, const std::string& body) {
  httplib::Client client(endpoint.base_url);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  httplib::Headers headers;
  if (!endpoint.api_key_env_var.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env_var.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = client.Post(endpoint.request_path, headers, body, "application/json");
  if (!res) return {0, ""};
  return {res->status, res->body};
}

nlohmann::json request_body(const CompletionRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model_name},
          {"messages", messages},
          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens}};
}

std::string cache_key(const CompletionRequest& req) {
  nlohmann::json j = request_body(req);
  j["endpoint_id"] = req.endpoint_id;
  j["request_tag"] = req.request_tag;
  return io::sha256_hex(j.dump());
}

Gateway::Gateway(GatewayOptions options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)),
      transport_(std::move(transport)),
      sleeper_([](double ms) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
      }),
      jitter_rng_(derive_seed({options_.jitter_seed, 0x6a6974ULL})) {
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

void Gateway::register_endpoint(const EndpointConfig& config) {
  Endpoint ep;
  ep.http = config;
  ep.limiter = std::make_unique<ConcurrencyLimiter>(config.max_concurrency);
  endpoints_.insert_or_assign(config.endpoint_id, std::move(ep));
}

void Gateway::register_responder(const std::string& endpoint_id,
                                 std::shared_ptr<Responder> responder, int max_concurrency) {
  Endpoint ep;
  ep.responder = std::move(responder);
  ep.limiter = std::make_unique<ConcurrencyLimiter>(max_concurrency);
  endpoints_.insert_or_assign(endpoint_id, std::move(ep));
}

bool Gateway::has_endpoint(std::string_view endpoint_id) const {
  return endpoints_.find(endpoint_id) != endpoints_.end();
}

std::string Gateway::model_for(std::string_view endpoint_id) const {
  auto it = endpoints_.find(endpoint_id);
  if (it == endpoints_.end() || !it->second.http) return "";
  return it->second.http->model_name;
}

std::optional<std::string> Gateway::cache_lookup(const std::string& key) const {
  if (!options_.cache_dir) return std::nullopt;
  const auto path = *options_.cache_dir / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    return j.at("text").get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void Gateway::cache_store(const std::string& key, const CompletionRequest& req,
                          const std::string& text) const {
  if (!options_.cache_dir) return;
  nlohmann::json j = {{"key", key},
                      {"endpoint_id", req.endpoint_id},
                      {"request_tag", req.request_tag},
                      {"request", request_body(req)},
                      {"text", text}};
  io::write_file_atomic(*options_.cache_dir / (key + ".json"), j.dump(2));
}

double Gateway::jitter(double delay_ms) {
  std::lock_guard lock(jitter_mu_);
  return delay_ms * options_.retry.jitter_fraction * jitter_rng_.uniform();
}

std::string Gateway::send_with_retries(const Endpoint& ep, const CompletionRequest& req,
                                       int& attempts) {
  const EndpointConfig& config = *ep.http;
  CompletionRequest wire = req;
  if (wire.model_name.empty()) wire.model_name = config.model_name;
  const std::string body = request_body(wire).dump();
  int last_status = 0;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      const double base = options_.retry.delay_before_ms(attempt);
      sleeper_(base + jitter(base));
    }
    attempts = attempt;
    TransportReply reply;
    try {
      reply = transport_->post(config, body);
    } catch (const std::exception&) {
      reply = {0, ""};
    }
    if (reply.status == 200) {
      try {
        const auto j = nlohmann::json::parse(reply.body);
        return j.at(nlohmann::json::json_pointer(config.reply_text_path)).get<std::string>();
      } catch (const std::exception& e) {
        throw GatewayError(GatewayError::Kind::MalformedResponse,
                           "malformed response from " + config.endpoint_id + ": " + e.what(), 200);
      }
    }
    last_status = reply.status;
    if (!retryable(reply.status)) break;
  }
  throw GatewayError(GatewayError::Kind::ExhaustedRetries,
                     "request to " + config.endpoint_id + " failed after " +
                         std::to_string(attempts) + " attempt(s), last status " +
                         std::to_string(last_status),
                     last_status);
}

CompletionResponse Gateway::complete(const CompletionRequest& req) {
  if (req.messages.empty() ||
      (req.messages.front().role != "system" && req.messages.front().role != "user")) {
    throw GatewayError(GatewayError::Kind::InvalidRequest,
                       "messages must be non-empty and start with a system or user message");
  }
  auto it = endpoints_.find(req.endpoint_id);
  if (it == endpoints_.end()) {
    throw GatewayError(GatewayError::Kind::EndpointUnknown, "unknown endpoint " + req.endpoint_id);
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 start)
        .count();
  };
  const std::string key = cache_key(req);
  if (auto hit = cache_lookup(key)) {
    return {std::move(*hit), elapsed(), true, 1};
  }
  if (options_.offline) {
    throw GatewayError(GatewayError::Kind::OfflineCacheMiss,
                       "offline and no cached reply for " + req.endpoint_id);
  }
  const Endpoint& ep = it->second;
  std::string text;
  int attempts = 1;
  {
    LimiterGuard guard(*ep.limiter);
    if (ep.responder) {
      text = ep.responder->reply(req);
    } else {
      text = send_with_retries(ep, req, attempts);
    }
  }
  cache_store(key, req, text);
  return {std::move(text), elapsed(), false, attempts};
}

// ---------------------------------------------------------------------------

ParsedScores parse_scored_reply(std::string_view text, ScoreSchema schema, OutOfRange policy) {
  ParsedScores out;
  std::optional<std::string_view> score_field;
  std::array<std::optional<std::string_view>, 3> dim_fields;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    if (auto v = labeled_value(line, "SCORE:")) score_field = v;
    if (auto v = labeled_value(line, "D1:")) dim_fields[0] = v;
    if (auto v = labeled_value(line, "D2:")) dim_fields[1] = v;
    if (auto v = labeled_value(line, "D3:")) dim_fields[2] = v;
    start = end + 1;
  }
  const std::string raw(text);
  if (schema == ScoreSchema::Answer) {
    if (!score_field) throw UnparseableJudgeReply(raw, "no SCORE line");
    auto v = parse_number(*score_field);
    if (!v || !std::isfinite(*v)) throw UnparseableJudgeReply(raw, "SCORE is not a number");
    if (*v < 0.0 || *v > 1.0) {
      if (policy == OutOfRange::Reject) throw UnparseableJudgeReply(raw, "SCORE outside [0, 1]");
      *v = std::clamp(*v, 0.0, 1.0);
    }
    out.score = *v;
    return out;
  }
  constexpr std::array<int, 3> kMax = {2, 1, 2};
  std::array<int, 3> dims{};
  for (size_t i = 0; i < 3; ++i) {
    const std::string label = "D" + std::to_string(i + 1);
    if (!dim_fields[i]) throw UnparseableJudgeReply(raw, "no " + label + " line");
    auto v = parse_int(*dim_fields[i]);
    if (!v) throw UnparseableJudgeReply(raw, label + " is not an integer");
    if (*v < 0 || *v > kMax[i]) {
      if (policy == OutOfRange::Reject) throw UnparseableJudgeReply(raw, label + " out of range");
      *v = std::clamp(*v, 0, kMax[i]);
    }
    dims[i] = *v;
  }
  out.dims = dims;
  return out;
}

}  // namespace tracerl::gateway
