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
#include <map>
#include <string>

#include "tracerl/error.hpp"
#include "tracerl/gateway.hpp"
#include "tracerl/trace_chain.hpp"

namespace tracerl {

class JudgeError : public Error {
 public:
  enum class Kind { JudgeUnavailable, UnparseableJudgeReply, RubricParseFailure, UnknownPrompt };
  JudgeError(Kind kind, const std::string& what, std::string raw = "")
      : Error(what), kind_(kind), raw_(std::move(raw)) {}
  Kind kind() const { return kind_; }
  /// Judge reply text, when the failure was in parsing it.
  const std::string& raw() const { return raw_; }

 private:
  Kind kind_;
  std::string raw_;
};

/// Handle on a judging service: where to send requests and which prompt
/// fixtures to fill. The client and prompt registry must outlive the handle.
struct Judge {
  gateway::CompletionClient* client = nullptr;
  std::string endpoint_id = "mock";
  std::string model_name;
  const trace::TemplateRegistry* prompts = nullptr;
  double temperature = 0.0;
  int max_tokens = 512;
};

/// Fixture ids shipped under data/prompts.
inline constexpr const char* kAnswerPromptId = "judge_answer";
inline constexpr const char* kTracePromptId = "judge_trace";
inline constexpr const char* kEvalPromptId = "eval_fewshot";

/// Default location of the shipped data directory (prompts, templates).
std::filesystem::path default_asset_dir();

/// Fills the named fixture and sends it as a single user message. Gateway
/// failures surface as JudgeUnavailable.
std::string ask_judge(const Judge& judge, const std::string& prompt_id,
                      const std::map<std::string, std::string>& values, const std::string& tag);

}  // namespace tracerl
