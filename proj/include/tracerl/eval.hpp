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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracerl/judge.hpp"

namespace tracerl::eval {

struct EvalRecord {
  std::string sample_id;
  std::string category;
  std::string question;
  std::string gold;
  std::string prediction;
  std::optional<double> score;  // in [0, 1] once judged
};

struct CategoryScore {
  double mean_score = 0.0;  // x100
  int count = 0;
};

enum class AverageMode {
  Micro,  // every sample weighs the same
  Macro,  // every category weighs the same
};

struct EvalAggregate {
  std::string run_id;
  std::map<std::string, CategoryScore> per_category;
  double overall = 0.0;  // x100
};

struct StabilityReport {
  int runs = 0;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (divides by runs - 1)
  double cv_percent = 0.0;
};

struct DeltaTable {
  std::map<std::string, double> per_category;  // human - judge
  double overall = 0.0;
};

class EvalError : public Error {
 public:
  enum class Kind { UnjudgedRecord, DegenerateMean, TooFewRuns, NoSharedCategories, ScoreOutOfRange };
  EvalError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Scores one record with the few-shot judging prompt `fewshot_prompt_id`.
/// Requests differing only in `request_tag` are cached separately, so
/// repeated runs with distinct tags each reach the judge.
EvalRecord judge_sample(const Judge& judge, EvalRecord record,
                        const std::string& fewshot_prompt_id = kEvalPromptId,
                        const std::string& request_tag = "eval");

/// Judges every record, up to max_workers at a time. Output order matches input.
std::vector<EvalRecord> judge_all(const Judge& judge, std::span<const EvalRecord> records,
                                  const std::string& fewshot_prompt_id = kEvalPromptId,
                                  int max_workers = 4, const std::string& request_tag = "eval");

EvalAggregate aggregate(std::span<const EvalRecord> records, AverageMode mode = AverageMode::Micro,
                        std::string run_id = "");

/// Mean, sample standard deviation and coefficient of variation of per-run
/// overall scores.
StabilityReport stability(std::span<const double> values);

/// Signed human - judge differences over shared categories. The key
/// "Overall", when present in both maps, gives the overall difference;
/// otherwise it is the mean of the per-category differences.
DeltaTable human_delta(const std::map<std::string, double>& judge_scores,
                       const std::map<std::string, double>& human_scores);

inline constexpr const char* kOverallKey = "Overall";

/// Benchmark JSONL {sample_id, category, question, gold} joined with
/// predictions JSONL {sample_id, prediction}. A sample without a prediction
/// gets an empty one.
std::vector<EvalRecord> load_records(const std::filesystem::path& bench,
                                     const std::filesystem::path& predictions);

nlohmann::json to_json(const EvalRecord& r);
nlohmann::json to_json(const EvalAggregate& a);
nlohmann::json to_json(const StabilityReport& s);
nlohmann::json to_json(const DeltaTable& d);

/// Fixed-width text table of per-category scores and the overall score.
std::string render_table(const EvalAggregate& a);

}  // namespace tracerl::eval
