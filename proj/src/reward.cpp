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

#include "tracerl/reward.hpp"

#include <algorithm>
#include <cmath>

namespace tracerl::reward {
namespace {

void check_component(const char* name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw RewardError(RewardError::Kind::ComponentOutOfRange,
                      std::string(name) + " must lie in [0, 1]");
  }
}

}  // namespace

double trace_reward(const TraceDims& dims) {
  if (dims.d1 < 0 || dims.d1 > 2 || dims.d2 < 0 || dims.d2 > 1 || dims.d3 < 0 || dims.d3 > 2) {
    throw RewardError(RewardError::Kind::ComponentOutOfRange, "trace dimensions out of range");
  }
  return (dims.d1 / 2.0 + dims.d2 / 1.0 + dims.d3 / 2.0) / 3.0;
}

void validate(const RewardWeights& w) {
  for (double v : {w.alpha, w.beta, w.gamma}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw RewardError(RewardError::Kind::WeightInvariantViolation,
                        "reward weights must lie in [0, 1]");
    }
  }
  if (std::abs(w.alpha + w.beta + w.gamma - 1.0) > 1e-9) {
    throw RewardError(RewardError::Kind::WeightInvariantViolation,
                      "reward weights must sum to 1");
  }
}

double score_answer(const Judge& judge, const std::string& question, const std::string& gold,
                    const std::string& prediction) {
  const auto reply = ask_judge(judge, kAnswerPromptId,
                               {{"question", question}, {"gold", gold}, {"prediction", prediction}},
                               "reward-answer");
  try {
    return *gateway::parse_scored_reply(reply, gateway::ScoreSchema::Answer,
                                        gateway::OutOfRange::Clamp)
                .score;
  } catch (const gateway::UnparseableJudgeReply& e) {
    throw JudgeError(JudgeError::Kind::UnparseableJudgeReply, e.what(), e.raw());
  }
}

TraceScore score_trace(const Judge& judge, const trace::SectionedResponse& response,
                       const std::string& gold) {
  const auto reply = ask_judge(judge, kTracePromptId,
                               {{"caption", response.caption},
                                {"think", response.think},
                                {"answer", response.answer},
                                {"gold", gold}},
                               "reward-trace");
  try {
    const auto d = *gateway::parse_scored_reply(reply, gateway::ScoreSchema::Dims).dims;
    TraceScore out;
    out.dims = {d[0], d[1], d[2]};
    out.r_trace = trace_reward(out.dims);
    return out;
  } catch (const gateway::UnparseableJudgeReply& e) {
    throw JudgeError(JudgeError::Kind::RubricParseFailure, e.what(), e.raw());
  }
}

RewardBreakdown compose_reward(double r_answer, double r_trace, double r_format,
                               const RewardWeights& w) {
  validate(w);
  check_component("r_answer", r_answer);
  check_component("r_trace", r_trace);
  check_component("r_format", r_format);
  RewardBreakdown b;
  b.r_answer = r_answer;
  b.r_trace = r_trace;
  b.r_format = r_format;
  b.gated = !(r_answer > 0.0);
  const double indicator = b.gated ? 0.0 : 1.0;
  b.r_total = w.alpha * r_answer + indicator * w.beta * r_trace + w.gamma * r_format;
  // Rounding can push a sum of weights that is 1 within 1e-9 just past 1.
  b.r_total = std::clamp(b.r_total, 0.0, 1.0);
  return b;
}

nlohmann::json score_record(const RolloutContext& ctx, const RewardBreakdown& b) {
  nlohmann::json j = {{"query_id", ctx.query_id},
                      {"rollout_index", ctx.rollout_index},
                      {"r_answer", b.r_answer},
                      {"d1", nullptr},
                      {"d2", nullptr},
                      {"d3", nullptr},
                      {"r_trace", b.r_trace},
                      {"r_format", b.r_format},
                      {"r_total", b.r_total}};
  if (b.dims) {
    j["d1"] = b.dims->d1;
    j["d2"] = b.dims->d2;
    j["d3"] = b.dims->d3;
  }
  return j;
}

void ScoreLog::record(const RolloutContext& ctx, const RewardBreakdown& b) {
  sink_.append(score_record(ctx, b));
}

RewardBreakdown reward_rollout(const Judge& judge, const RolloutContext& ctx,
                               const std::string& raw_output, const RewardWeights& w,
                               ScoreLog* log) {
  validate(w);
  try {
    RewardBreakdown b;
    std::optional<trace::SectionedResponse> sections;
    try {
      sections = trace::parse_sections(raw_output);
    } catch (const trace::FormatError&) {
    }
    if (sections) {
      const double r_answer = score_answer(judge, ctx.question, ctx.gold, sections->answer);
      if (r_answer > 0.0) {
        const auto ts = score_trace(judge, *sections, ctx.gold);
        b = compose_reward(r_answer, ts.r_trace, 1.0, w);
        b.dims = ts.dims;
      } else {
        b = compose_reward(r_answer, 0.0, 1.0, w);
      }
    } else {
      const std::string prediction = trace::extract_answer(raw_output).value_or(raw_output);
      b = compose_reward(score_answer(judge, ctx.question, ctx.gold, prediction), 0.0, 0.0, w);
    }
    if (log != nullptr) log->record(ctx, b);
    return b;
  } catch (const JudgeError& e) {
    throw JudgeError(e.kind(),
                     "query " + ctx.query_id + " rollout " + std::to_string(ctx.rollout_index) +
                         ": " + e.what(),
                     e.raw());
  }
}

RewardWeights weights_from_json(const nlohmann::json& j) {
  RewardWeights w;
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.gamma = j.value("gamma", w.gamma);
  validate(w);
  return w;
}

nlohmann::json to_json(const RewardWeights& w) {
  return {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}};
}

}  // namespace tracerl::reward
