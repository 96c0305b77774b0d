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

#include "tracerl/synthetic_task.hpp"

#include <stdexcept>

#include "tracerl/rng.hpp"

namespace tracerl::toy::task {
namespace {

std::string name_of(Token t) {
  if (t >= kFindingFirst && t < kExtentFirst) return std::string(kFindings[t - kFindingFirst]);
  if (t >= kExtentFirst && t < kRegionFirst) return std::string(kExtents[t - kExtentFirst]);
  if (t >= kRegionFirst && t < kVocabSize) return std::string(kRegions[t - kRegionFirst]);
  return "?";
}

std::string caption_for(std::span<const Token> prompt) {
  if (prompt.size() == 3 && prompt[0] >= kFindingFirst && prompt[0] < kExtentFirst &&
      prompt[1] >= kExtentFirst && prompt[1] < kRegionFirst && prompt[2] >= kRegionFirst &&
      prompt[2] < kVocabSize) {
    return "<Caption>" + name_of(prompt[0]) + " (" + name_of(prompt[1]) + ") in the " +
           name_of(prompt[2]) + " region</Caption>";
  }
  return "<Caption>unremarkable view</Caption>";
}

std::string think_for(int knowledge) {
  std::string s = "<Think>\nHypotheses:\n1. ";
  s += kDiagnoses[knowledge];
  s += "\n2. ";
  s += kDiagnoses[(knowledge + 1) % kNumDiagnoses];
  s += "\nKnowledge:\n1. ";
  s += kKnowledge[knowledge];
  s += "\nVerification:\nThe observed features are compared with the cited criteria.\n</Think>";
  return s;
}

}  // namespace

const std::vector<Rule>& rule_table() {
  static const std::vector<Rule> table = [] {
    std::vector<Rule> rules;
    for (int f = 0; f < kNumDiagnoses; ++f) {
      for (int e = 0; e < kNumGrades; ++e) {
        rules.push_back({"R-" + std::string(kFindings[f]) + "-" + std::string(kExtents[e]), f, e,
                         f, e});
      }
    }
    return rules;
  }();
  return table;
}

Token rule_table_lookup(std::string_view rule_id, int finding, int extent) {
  for (const auto& r : rule_table()) {
    if (r.rule_id == rule_id) {
      if (r.finding != finding || r.extent != extent) {
        throw std::out_of_range("rule " + r.rule_id + " does not cover the given features");
      }
      return answer_token(r.diagnosis, r.grade);
    }
  }
  throw std::out_of_range("unknown rule " + std::string(rule_id));
}

Token answer_token(int diagnosis, int grade) {
  return kAnswerFirst + diagnosis * kNumGrades + grade;
}

std::string answer_text(Token answer) {
  const int idx = answer - kAnswerFirst;
  if (idx < 0 || idx >= kNumDiagnoses * kNumGrades) {
    throw std::out_of_range("token " + std::to_string(answer) + " is not an answer token");
  }
  return std::string(kDiagnoses[idx / kNumGrades]) + " " + std::string(kGrades[idx % kNumGrades]);
}

std::optional<int> diagnosis_of(std::string_view gold_text) {
  for (int d = 0; d < kNumDiagnoses; ++d) {
    const auto& name = kDiagnoses[d];
    size_t pos = gold_text.find(name);
    while (pos != std::string_view::npos) {
      const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(gold_text[pos - 1]));
      const size_t end = pos + name.size();
      const bool right_ok =
          end == gold_text.size() || !std::isalnum(static_cast<unsigned char>(gold_text[end]));
      if (left_ok && right_ok) return d;
      pos = gold_text.find(name, pos + 1);
    }
  }
  return std::nullopt;
}

SyntheticInstance make_synthetic_instance(std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0x73796e7468ULL}));
  const int finding = static_cast<int>(rng.below(kNumDiagnoses));
  const int extent = static_cast<int>(rng.below(kNumGrades));
  const int region = static_cast<int>(rng.below(kNumRegions));
  const Rule* rule = nullptr;
  for (const auto& r : rule_table()) {
    if (r.finding == finding && r.extent == extent) rule = &r;
  }
  SyntheticInstance inst;
  inst.query_id = "synth-" + std::to_string(seed);
  inst.prompt_tokens = {kFindingFirst + finding, kExtentFirst + extent, kRegionFirst + region};
  inst.rule_id = rule->rule_id;
  inst.gold_answer = answer_token(rule->diagnosis, rule->grade);
  return inst;
}

std::vector<SyntheticInstance> make_dataset(std::uint64_t first_seed, int count) {
  std::vector<SyntheticInstance> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(make_synthetic_instance(first_seed + i));
  return out;
}

std::string question_text(std::span<const Token> prompt) {
  std::string q = "Findings:";
  for (Token t : prompt) q += " " + name_of(t);
  q += ". What is the diagnosis and its grade?";
  return q;
}

std::string render_completion(std::span<const Token> prompt, std::span<const Token> completion) {
  std::string out;
  for (Token t : completion) {
    if (t == kStop) break;
    std::string piece;
    if (t == kCaption) {
      piece = caption_for(prompt);
    } else if (t >= kThinkFirst && t < kThinkBare) {
      piece = think_for(t - kThinkFirst);
    } else if (t == kThinkBare) {
      piece = "<Think>\nThe image is reviewed without a structured comparison.\n</Think>";
    } else if (t >= kAnswerFirst && t < kFindingFirst) {
      piece = "<Answer>" + answer_text(t) + "</Answer>";
    } else {
      piece = name_of(t);
    }
    if (!out.empty()) out += '\n';
    out += piece;
  }
  return out;
}

std::vector<Token> canonical_completion(const SyntheticInstance& inst) {
  const int diagnosis = (inst.gold_answer - kAnswerFirst) / kNumGrades;
  return {kCaption, kThinkFirst + diagnosis, inst.gold_answer, kStop};
}

std::vector<Token> answer_only_completion(const SyntheticInstance& inst) {
  return {inst.gold_answer, kStop};
}

nlohmann::json to_json(const SyntheticInstance& inst) {
  return {{"query_id", inst.query_id},
          {"prompt_tokens", inst.prompt_tokens},
          {"gold_answer", inst.gold_answer},
          {"rule_id", inst.rule_id}};
}

SyntheticInstance instance_from_json(const nlohmann::json& j) {
  SyntheticInstance inst;
  inst.query_id = j.value("query_id", std::string());
  inst.prompt_tokens = j.at("prompt_tokens").get<std::vector<Token>>();
  inst.gold_answer = j.at("gold_answer").get<Token>();
  inst.rule_id = j.at("rule_id").get<std::string>();
  return inst;
}

PolicyParams warm_start_policy(WarmStart kind, std::uint64_t seed) {
  // Tuned so the fitted policy answers correctly about half the time.
  constexpr int kCorpusSize = 64;
  constexpr int kSteps = 6;
  constexpr double kLearningRate = 1.0;
  auto corpus = make_dataset(derive_seed({seed, 0x736674ULL}) % 1000000007ULL, kCorpusSize);
  std::vector<SupervisedExample> examples;
  for (const auto& inst : corpus) {
    examples.push_back({inst.prompt_tokens, kind == WarmStart::Trace
                                                ? canonical_completion(inst)
                                                : answer_only_completion(inst)});
  }
  return supervised_fit(init_policy(kVocabSize, kDefaultContextOrder, seed), examples, kSteps,
                        kLearningRate);
}

}  // namespace tracerl::toy::task
