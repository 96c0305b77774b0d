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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tracerl/gateway.hpp"

namespace tracerl::gateway {

/// Body of the last `[[NAME]] ... [[/NAME]]` block in text, whitespace-trimmed.
std::optional<std::string> find_block(std::string_view text, std::string_view name);

/// Lower-cased alphanumeric words of a free-form answer.
std::vector<std::string> answer_parts(std::string_view text);

/// Answer rubric of the mock judge (docs/mock_rubric.md):
///   empty prediction                       -> 0.0
///   same set of words as the gold answer   -> 1.0
///   shares at least one word with the gold -> 0.5
///   otherwise                              -> 0.0
double mock_answer_score(std::string_view gold, std::string_view prediction);

/// Trace rubric of the mock judge, from the Caption/Think/Answer bodies and the
/// gold answer. Returns {d1, d2, d3}.
std::array<int, 3> mock_trace_dims(std::string_view caption, std::string_view think,
                                   std::string_view answer, std::string_view gold);

/// Deterministic judge. Reads the GOLD/PREDICTION (answer scoring) or
/// CAPTION/THINK/ANSWER/GOLD (trace scoring) blocks from the user message and
/// replies with a short rationale followed by `SCORE: x` or `D1/D2/D3` lines.
class MockJudge : public Responder {
 public:
  std::string reply(const CompletionRequest& req) override;
};

}  // namespace tracerl::gateway
