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

#include "tracerl/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "tracerl/io.hpp"
#include "tracerl/parallel.hpp"

namespace tracerl::eval {

EvalRecord judge_sample(const Judge& judge, EvalRecord record, const std::string& fewshot_prompt_id,
                        const std::string& request_tag) {
  const auto reply = ask_judge(judge, fewshot_prompt_id,
                               {{"question", record.question},
                                {"gold", record.gold},
                                {"prediction", record.prediction}},
                               request_tag);
  try {
    record.score = *gateway::parse_scored_reply(reply, gateway::ScoreSchema::Answer).score;
  } catch (const gateway::UnparseableJudgeReply& e) {
    throw JudgeError(JudgeError::Kind::UnparseableJudgeReply,
                     "sample " + record.sample_id + ": " + e.what(), e.raw());
  }
  return record;
}

std::vector<EvalRecord> judge_all(const Judge& judge, std::span<const EvalRecord> records,
                                  const std::string& fewshot_prompt_id, int max_workers,
                                  const std::string& request_tag) {
  std::vector<EvalRecord> out(records.begin(), records.end());
  parallel_for(out.size(), max_workers, [&](size_t i) {
    out[i] = judge_sample(judge, std::move(out[i]), fewshot_prompt_id, request_tag);
  });
  return out;
}

EvalAggregate aggregate(std::span<const EvalRecord> records, AverageMode mode, std::string run_id) {
  EvalAggregate a;
  a.run_id = std::move(run_id);
  std::map<std::string, double> sums;
  double total = 0.0;
  for (const auto& r : records) {
    if (!r.score) {
      throw EvalError(EvalError::Kind::UnjudgedRecord, "record " + r.sample_id + " has no score");
    }
    if (!(*r.score >= 0.0 && *r.score <= 1.0)) {
      throw EvalError(EvalError::Kind::ScoreOutOfRange,
                      "record " + r.sample_id + " score outside [0, 1]");
    }
    sums[r.category] += *r.score;
    a.per_category[r.category].count += 1;
    total += *r.score;
  }
  for (auto& [cat, cs] : a.per_category) cs.mean_score = sums[cat] / cs.count * 100.0;
  if (records.empty()) return a;
  if (mode == AverageMode::Micro) {
    a.overall = total / static_cast<double>(records.size()) * 100.0;
  } else {
    double s = 0.0;
    for (const auto& [_, cs] : a.per_category) s += cs.mean_score;
    a.overall = s / static_cast<double>(a.per_category.size());
  }
  return a;
}

StabilityReport stability(std::span<const double> values) {
  if (values.size() < 2) {
    throw EvalError(EvalError::Kind::TooFewRuns, "stability needs at least two runs");
  }
  StabilityReport s;
  s.runs = static_cast<int>(values.size());
  s.values.assign(values.begin(), values.end());
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (s.mean == 0.0) {
    throw EvalError(EvalError::Kind::DegenerateMean, "coefficient of variation undefined at mean 0");
  }
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  s.cv_percent = s.stddev / std::abs(s.mean) * 100.0;
  return s;
}

DeltaTable human_delta(const std::map<std::string, double>& judge_scores,
                       const std::map<std::string, double>& human_scores) {
  DeltaTable d;
  for (const auto& [cat, j] : judge_scores) {
    if (cat == kOverallKey) continue;
    auto it = human_scores.find(cat);
    if (it != human_scores.end()) d.per_category[cat] = it->second - j;
  }
  if (d.per_category.empty()) {
    throw EvalError(EvalError::Kind::NoSharedCategories, "score maps share no category");
  }
  auto jo = judge_scores.find(kOverallKey);
  auto ho = human_scores.find(kOverallKey);
  if (jo != judge_scores.end() && ho != human_scores.end()) {
    d.overall = ho->second - jo->second;
  } else {
    double s = 0.0;
    for (const auto& [_, v] : d.per_category) s += v;
    d.overall = s / static_cast<double>(d.per_category.size());
  }
  return d;
}

std::vector<EvalRecord> load_records(const std::filesystem::path& bench,
                                     const std::filesystem::path& predictions) {
  std::map<std::string, std::string> preds;
  for (const auto& j : io::read_jsonl(predictions)) {
    preds[j.at("sample_id").get<std::string>()] = j.value("prediction", std::string());
  }
  std::vector<EvalRecord> out;
  for (const auto& j : io::read_jsonl(bench)) {
    EvalRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.category = j.at("category").get<std::string>();
    r.question = j.value("question", std::string());
    r.gold = j.at("gold").get<std::string>();
    auto it = preds.find(r.sample_id);
    if (it != preds.end()) r.prediction = it->second;
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j = {{"sample_id", r.sample_id},
                      {"category", r.category},
                      {"question", r.question},
                      {"gold", r.gold},
                      {"prediction", r.prediction},
                      {"score", nullptr}};
  if (r.score) j["score"] = *r.score;
  return j;
}

nlohmann::json to_json(const EvalAggregate& a) {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [cat, cs] : a.per_category) {
    cats[cat] = {{"mean_score", cs.mean_score}, {"count", cs.count}};
  }
  return {{"run_id", a.run_id}, {"per_category", cats}, {"overall", a.overall}};
}

nlohmann::json to_json(const StabilityReport& s) {
  return {{"runs", s.runs},
          {"values", s.values},
          {"mean", s.mean},
          {"stddev", s.stddev},
          {"cv_percent", s.cv_percent}};
}

nlohmann::json to_json(const DeltaTable& d) {
  return {{"per_category", d.per_category}, {"overall", d.overall}};
}

std::string render_table(const EvalAggregate& a) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %8s %8s\n", "category", "score", "count");
  out << line;
  int total = 0;
  for (const auto& [cat, cs] : a.per_category) {
    std::snprintf(line, sizeof line, "%-16s %8.2f %8d\n", cat.c_str(), cs.mean_score, cs.count);
    out << line;
    total += cs.count;
  }
  std::snprintf(line, sizeof line, "%-16s %8.2f %8d\n", "Overall", a.overall, total);
  out << line;
  return out.str();
}

}  // namespace tracerl::eval
