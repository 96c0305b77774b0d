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

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "stub_server.hpp"
#include "tracerl/mock_judge.hpp"
#include "tracerl/parallel.hpp"

using namespace tracerl::gateway;
using tracerl::testing::StubServer;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("tracerl_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

CompletionRequest answer_request(const std::string& endpoint) {
  CompletionRequest r;
  r.endpoint_id = endpoint;
  r.model_name = "judge-model";
  r.messages = {{"user", "[[GOLD]]\ncaries mild\n[[/GOLD]]\n[[PREDICTION]]\ncaries severe\n[[/PREDICTION]]"}};
  r.request_tag = "t";
  return r;
}

// Counts calls and echoes the last user message.
struct CountingResponder : Responder {
  std::atomic<int> calls{0};
  std::string reply(const CompletionRequest& req) override {
    ++calls;
    return "echo:" + req.messages.back().content;
  }
};

std::unique_ptr<Gateway> fast_gateway(GatewayOptions opts = {}) {
  auto g = std::make_unique<Gateway>(std::move(opts));
  g->set_sleeper([](double) {});
  return g;
}

}  // namespace

TEST_CASE("reply parsing") {
  CHECK(*parse_scored_reply("...reasoning...\nSCORE: 0.5", ScoreSchema::Answer).score == 0.5);
  const auto d = parse_scored_reply("D1: 2\nD2: 1\nD3: 2", ScoreSchema::Dims).dims;
  REQUIRE(d.has_value());
  CHECK(*d == std::array<int, 3>{2, 1, 2});
  CHECK_THROWS_AS(parse_scored_reply("SCORE: 1.7", ScoreSchema::Answer), UnparseableJudgeReply);
  CHECK(*parse_scored_reply("SCORE: 1.7", ScoreSchema::Answer, OutOfRange::Clamp).score == 1.0);
  CHECK(*parse_scored_reply("score: 0.2\nScore: 0.8", ScoreSchema::Answer).score == 0.8);
  CHECK_THROWS_AS(parse_scored_reply("no score", ScoreSchema::Answer), UnparseableJudgeReply);
  CHECK_THROWS_AS(parse_scored_reply("SCORE: high", ScoreSchema::Answer), UnparseableJudgeReply);
  CHECK_THROWS_AS(parse_scored_reply("D1: 2\nD2: 1", ScoreSchema::Dims), UnparseableJudgeReply);
  CHECK_THROWS_AS(parse_scored_reply("D1: 2\nD2: 2\nD3: 0", ScoreSchema::Dims), UnparseableJudgeReply);
  try {
    parse_scored_reply("garbled", ScoreSchema::Answer);
  } catch (const UnparseableJudgeReply& e) {
    CHECK(e.raw() == "garbled");
  }
}

TEST_CASE("unknown endpoint") {
  auto g = fast_gateway();
  try {
    g->complete(answer_request("nowhere"));
    FAIL("completed against an unregistered endpoint");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayError::Kind::EndpointUnknown);
  }
}

TEST_CASE("cache serves repeated requests") {
  TempDir dir("cache");
  GatewayOptions opts;
  opts.cache_dir = dir.path;
  auto g = fast_gateway(opts);
  auto responder = std::make_shared<CountingResponder>();
  g->register_responder("local", responder);

  const auto first = g->complete(answer_request("local"));
  const auto second = g->complete(answer_request("local"));
  CHECK_FALSE(first.from_cache);
  CHECK(second.from_cache);
  CHECK(second.text == first.text);
  CHECK(responder->calls == 1);

  auto other = answer_request("local");
  other.request_tag = "different";
  CHECK_FALSE(g->complete(other).from_cache);
  CHECK(cache_key(other) != cache_key(answer_request("local")));

  GatewayOptions offline = opts;
  offline.offline = true;
  auto replay = fast_gateway(offline);
  replay->register_responder("local", std::make_shared<CountingResponder>());
  CHECK(replay->complete(answer_request("local")).text == first.text);
  auto miss = answer_request("local");
  miss.messages[0].content = "never seen";
  try {
    replay->complete(miss);
    FAIL("offline gateway reached the endpoint");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayError::Kind::OfflineCacheMiss);
  }
}

TEST_CASE("backoff schedule") {
  RetryPolicy p;
  CHECK(p.delay_before_ms(1) == 0.0);
  CHECK(p.delay_before_ms(2) == 1000.0);
  CHECK(p.delay_before_ms(3) == 2000.0);
  for (int a = 2; a < 8; ++a) CHECK(p.delay_before_ms(a + 1) > p.delay_before_ms(a));
}

TEST_CASE("stub server: two failures then success") {
  StubServer server(std::make_shared<MockJudge>());
  server.script_statuses({500, 500, 200});
  auto g = fast_gateway();
  std::vector<double> sleeps;
  g->set_sleeper([&](double ms) { sleeps.push_back(ms); });
  g->register_endpoint(server.endpoint("stub"));
  const auto r = g->complete(answer_request("stub"));
  CHECK(r.attempt_count == 3);
  CHECK_FALSE(r.from_cache);
  CHECK(r.text.find("SCORE: 0.5") != std::string::npos);
  CHECK(server.hits() == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0] >= 1000.0);
  CHECK(sleeps[0] < 1250.0);
  CHECK(sleeps[1] >= 2000.0);
  CHECK(sleeps[1] < 2500.0);
}

TEST_CASE("stub server: persistent failures exhaust retries") {
  StubServer server(std::make_shared<MockJudge>());
  server.script_statuses({503, 503, 503, 503, 503, 503});
  auto g = fast_gateway();
  g->register_endpoint(server.endpoint("stub"));
  try {
    g->complete(answer_request("stub"));
    FAIL("succeeded against a failing server");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayError::Kind::ExhaustedRetries);
    CHECK(e.last_status() == 503);
  }
  CHECK(server.hits() == 5);
}

TEST_CASE("stub server: client errors are not retried") {
  StubServer server(std::make_shared<MockJudge>());
  server.script_statuses({400});
  auto g = fast_gateway();
  g->register_endpoint(server.endpoint("stub"));
  try {
    g->complete(answer_request("stub"));
    FAIL("succeeded after a 400");
  } catch (const GatewayError& e) {
    CHECK(e.last_status() == 400);
  }
  CHECK(server.hits() == 1);
}

TEST_CASE("connection failures are retried") {
  auto g = fast_gateway();
  EndpointConfig dead;
  dead.endpoint_id = "dead";
  dead.base_url = "http://127.0.0.1:1";
  g->register_endpoint(dead);
  try {
    g->complete(answer_request("dead"));
    FAIL("succeeded against a closed port");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayError::Kind::ExhaustedRetries);
    CHECK(e.last_status() == 0);
  }
}

TEST_CASE("mock judge over HTTP matches the in-process mock") {
  StubServer server(std::make_shared<MockJudge>());
  auto g = fast_gateway();
  g->register_endpoint(server.endpoint("http"));
  g->register_responder("local", std::make_shared<MockJudge>());
  for (const char* pred : {"caries mild", "caries severe", "abscess mild", ""}) {
    auto a = answer_request("http");
    a.messages[0].content = std::string("[[GOLD]]\ncaries mild\n[[/GOLD]]\n[[PREDICTION]]\n") +
                            pred + "\n[[/PREDICTION]]";
    auto b = a;
    b.endpoint_id = "local";
    CHECK(g->complete(a).text == g->complete(b).text);
  }
}

TEST_CASE("malformed HTTP reply body") {
  struct Fixed : Transport {
    TransportReply post(const EndpointConfig&, const std::string&) override {
      return {200, "{\"choices\": []}"};
    }
  };
  Gateway g({}, std::make_shared<Fixed>());
  EndpointConfig c;
  c.endpoint_id = "x";
  c.base_url = "http://unused";
  g.register_endpoint(c);
  try {
    g.complete(answer_request("x"));
    FAIL("accepted a reply without text");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == GatewayError::Kind::MalformedResponse);
  }
}

TEST_CASE("per-endpoint concurrency bound") {
  struct Slow : Responder {
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    std::string reply(const CompletionRequest&) override {
      const int now = ++active;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      return "ok";
    }
  };
  auto g = fast_gateway();
  auto slow = std::make_shared<Slow>();
  g->register_responder("slow", slow, 2);
  tracerl::parallel_for(12, 6, [&](std::size_t i) {
    auto r = answer_request("slow");
    r.request_tag = std::to_string(i);
    g->complete(r);
  });
  CHECK(slow->peak <= 2);
}

TEST_CASE("endpoint config files") {
  TempDir dir("endpoints");
  const auto path = dir.path / "endpoints.json";
  std::ofstream(path) << R"({"endpoints": [
    {"endpoint_id": "a", "base_url": "http://h:1", "model_name": "m", "api_key_env_var": "KEY"},
    {"endpoint_id": "b", "base_url": "https://h", "model_name": "n", "max_concurrency": 2}
  ]})";
  const auto eps = load_endpoint_configs(path);
  REQUIRE(eps.size() == 2);
  CHECK(eps[0].api_key_env_var == "KEY");
  CHECK(eps[1].max_concurrency == 2);
  CHECK(eps[1].reply_text_path == "/choices/0/message/content");
  std::ofstream(path) << R"({"base_url": "http://h"})";
  CHECK_THROWS(load_endpoint_configs(path));
}
