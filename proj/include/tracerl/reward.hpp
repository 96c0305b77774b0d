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

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "tracerl/io.hpp"
#include "tracerl/judge.hpp"
#include "tracerl/trace_chain.hpp"

namespace tracerl::reward {

/// Judge ratings of a reasoning trace: d1 knowledge soundness (0-2),
/// d2 logical coherence (0-1), d3 answer consistency (0-2).
struct TraceDims {
  int d1 = 0;
  int d2 = 0;
  int d3 = 0;
  bool operator==(const TraceDims&) const = default;
};

/// Each dimension scaled by its maximum, then averaged. In [0, 1].
double trace_reward(const TraceDims& dims);

struct RewardWeights {
  double alpha = 0.6;  // answer
  double beta = 0.3;   // trace
  double gamma = 0.1;  // format
};

struct RewardBreakdown {
  double r_answer = 0.0;
  double r_trace = 0.0;
  double r_format = 0.0;
  std::optional<TraceDims> dims;
  bool gated = false;  // r_answer == 0, trace contribution dropped
  double r_total = 0.0;
};

class RewardError : public Error {
 public:
  enum class Kind { WeightInvariantViolation, ComponentOutOfRange };
  RewardError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Throws WeightInvariantViolation unless each weight is in [0, 1] and they
/// sum to 1 within 1e-9.
void validate(const RewardWeights& w);

/// Judge-scored answer correctness in [0, 1]. Out-of-range scores are clamped.
double score_answer(const Judge& judge, const std::string& question, const std::string& gold,
                    const std::string& prediction);

struct TraceScore {
  TraceDims dims;
  double r_trace = 0.0;
};

TraceScore score_trace(const Judge& judge, const trace::SectionedResponse& response,
                       const std::string& gold);

/// r_total = alpha * r_answer + [r_answer > 0] * beta * r_trace + gamma * r_format.
RewardBreakdown compose_reward(double r_answer, double r_trace, double r_format,
                               const RewardWeights& w);

struct RolloutContext {
  std::string query_id;
  int rollout_index = 0;
  std::string question;
  std::string gold;
};

/// Append-only JSONL score log.
class ScoreLog {
 public:
  explicit ScoreLog(std::filesystem::path path) : sink_(std::move(path)) {}
  void record(const RolloutContext& ctx, const RewardBreakdown& b);
  void flush() { sink_.flush(); }

 private:
  io::JsonlSink sink_;
};

nlohmann::json score_record(const RolloutContext& ctx, const RewardBreakdown& b);

/// Full composite reward for one raw model output. A response that fails the
/// format contract gets r_format = 0 and r_trace = 0, and its answer is taken
/// from the first complete Answer section or, failing that, the whole text.
/// The trace judge is not consulted when the answer score is 0.
RewardBreakdown reward_rollout(const Judge& judge, const RolloutContext& ctx,
                               const std::string& raw_output, const RewardWeights& w,
                               ScoreLog* log = nullptr);

RewardWeights weights_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RewardWeights& w);

}  // namespace tracerl::reward
