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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tracerl/toy_policy.hpp"

// Symbolic diagnosis: the prompt lists a finding, its extent and a jaw
// region; the answer is "<diagnosis> <grade>". The diagnosis follows from the
// finding, the grade from the extent, and the region is a distractor. The
// full table is documented in docs/synthetic_task.md.
namespace tracerl::toy::task {

inline constexpr int kNumDiagnoses = 4;
inline constexpr int kNumGrades = 2;
inline constexpr int kNumRegions = 2;

// Vocabulary layout.
inline constexpr Token kCaption = 1;
inline constexpr Token kThinkFirst = 2;  // kThinkFirst + k cites knowledge snippet k
inline constexpr Token kThinkBare = kThinkFirst + kNumDiagnoses;
inline constexpr Token kAnswerFirst = kThinkBare + 1;  // + diagnosis * kNumGrades + grade
inline constexpr Token kFindingFirst = kAnswerFirst + kNumDiagnoses * kNumGrades;
inline constexpr Token kExtentFirst = kFindingFirst + kNumDiagnoses;
inline constexpr Token kRegionFirst = kExtentFirst + kNumGrades;
inline constexpr int kVocabSize = kRegionFirst + kNumRegions;

inline constexpr int kDefaultContextOrder = 5;
inline constexpr int kDefaultMaxLen = 32;

inline constexpr std::array<std::string_view, kNumDiagnoses> kDiagnoses = {
    "caries", "periodontitis", "abscess", "calculus"};
inline constexpr std::array<std::string_view, kNumGrades> kGrades = {"mild", "severe"};
inline constexpr std::array<std::string_view, kNumDiagnoses> kFindings = {
    "crown-radiolucency", "alveolar-bone-loss", "apical-radiolucency", "supragingival-deposit"};
inline constexpr std::array<std::string_view, kNumGrades> kExtents = {"localized", "extensive"};
inline constexpr std::array<std::string_view, kNumRegions> kRegions = {"maxillary", "mandibular"};
inline constexpr std::array<std::string_view, kNumDiagnoses> kKnowledge = {
    "K-caries: enamel demineralization shows as a crown radiolucency",
    "K-periodontitis: attachment loss shows as alveolar bone loss",
    "K-abscess: periapical infection shows as an apical radiolucency",
    "K-calculus: mineralized plaque shows as a supragingival deposit"};

/// One row of the rule table.
struct Rule {
  std::string rule_id;
  int finding;
  int extent;
  int diagnosis;
  int grade;
};

const std::vector<Rule>& rule_table();

/// Gold answer token for (finding, extent) under the named rule. Throws
/// std::out_of_range when the rule is unknown or does not cover the features.
Token rule_table_lookup(std::string_view rule_id, int finding, int extent);

struct SyntheticInstance {
  std::string query_id;
  std::vector<Token> prompt_tokens;  // finding, extent, region
  Token gold_answer = 0;
  std::string rule_id;

  bool operator==(const SyntheticInstance&) const = default;
};

SyntheticInstance make_synthetic_instance(std::uint64_t seed);

/// Instances for seeds first_seed, first_seed+1, ...
std::vector<SyntheticInstance> make_dataset(std::uint64_t first_seed, int count);

Token answer_token(int diagnosis, int grade);
/// "<diagnosis> <grade>" for an answer token.
std::string answer_text(Token answer);
/// Diagnosis index named in a gold answer text, if any.
std::optional<int> diagnosis_of(std::string_view gold_text);

std::string question_text(std::span<const Token> prompt);

/// Detokenizes a completion into response text. Structural tokens expand into
/// whole sections, so the canonical completion
///   Caption, Think(knowledge of the diagnosis), Answer(gold), STOP
/// renders a well-formed trace.
std::string render_completion(std::span<const Token> prompt, std::span<const Token> completion);

/// Caption, Think citing the matching knowledge, Answer, STOP.
std::vector<Token> canonical_completion(const SyntheticInstance& inst);
/// Answer, STOP: the answer-only format used without the reasoning pattern.
std::vector<Token> answer_only_completion(const SyntheticInstance& inst);

nlohmann::json to_json(const SyntheticInstance& inst);
SyntheticInstance instance_from_json(const nlohmann::json& j);

enum class WarmStart { AnswerOnly, Trace };

/// Stand-in for the supervised stages that precede RL tuning: a randomly
/// initialized policy fitted briefly to either answer-only or full-trace
/// completions of a small seeded corpus. The fit is deliberately short so the
/// result is only partly accurate.
PolicyParams warm_start_policy(WarmStart kind, std::uint64_t seed);

}  // namespace tracerl::toy::task
