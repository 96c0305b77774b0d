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

#include "tracerl/selection.hpp"

#include <algorithm>
#include <numeric>

#include "tracerl/parallel.hpp"
#include "tracerl/rng.hpp"

namespace tracerl::select {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::TooEasy: return "TooEasy";
    case RejectReason::TooHard: return "TooHard";
    case RejectReason::LowSpread: return "LowSpread";
  }
  return "";
}

void validate(const SelectionConfig& cfg) {
  auto fail = [](const std::string& what) {
    throw SelectionError(SelectionError::Kind::InvalidConfig, what);
  };
  if (cfg.n_rollouts < 2) fail("n_rollouts must be at least 2");
  if (!(cfg.avg_low >= 0.0 && cfg.avg_low <= cfg.avg_high && cfg.avg_high <= 1.0)) {
    fail("need 0 <= avg_low <= avg_high <= 1");
  }
  if (!(cfg.min_range >= 0.0 && cfg.min_range <= 1.0)) fail("min_range must lie in [0, 1]");
  if (!(cfg.temperature > 0.0)) fail("temperature must be positive");
  if (cfg.target_count && *cfg.target_count < 0) fail("target_count must be non-negative");
  if (cfg.max_workers < 1) fail("max_workers must be at least 1");
}

SelectionVerdict is_medium(std::span<const double> scores, const SelectionConfig& cfg) {
  if (scores.size() != static_cast<size_t>(cfg.n_rollouts)) {
    throw SelectionError(SelectionError::Kind::WrongScoreCount,
                         "expected " + std::to_string(cfg.n_rollouts) + " scores, got " +
                             std::to_string(scores.size()));
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw SelectionError(SelectionError::Kind::ScoreOutOfRange, "scores must lie in [0, 1]");
    }
  }
  SelectionVerdict v;
  v.scores.assign(scores.begin(), scores.end());
  v.s_avg = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  v.s_range = *hi - *lo;
  if (v.s_avg < cfg.avg_low - kBoundaryTolerance) {
    v.reject_reason = RejectReason::TooHard;
  } else if (v.s_avg > cfg.avg_high + kBoundaryTolerance) {
    v.reject_reason = RejectReason::TooEasy;
  } else if (v.s_range < cfg.min_range - kBoundaryTolerance) {
    v.reject_reason = RejectReason::LowSpread;
  }
  v.retained = !v.reject_reason.has_value();
  return v;
}

std::vector<std::string> SelectionReport::selected_ids() const {
  std::vector<std::string> out;
  for (const auto& v : verdicts) {
    if (v.selected) out.push_back(v.query_id);
  }
  return out;
}

std::uint64_t rollout_seed(std::uint64_t seed, const std::string& query_id, int rollout_index) {
  return derive_seed({seed, fnv1a(query_id), static_cast<std::uint64_t>(rollout_index)});
}

SelectionReport select(std::span<const std::string> query_ids, const CompletionSource& source,
                       const RolloutScorer& scorer, const SelectionConfig& cfg) {
  validate(cfg);
  if (query_ids.empty()) throw SelectionError(SelectionError::Kind::EmptyDataset, "dataset is empty");

  std::vector<SelectionVerdict> verdicts(query_ids.size());
  parallel_for(query_ids.size(), cfg.max_workers, [&](size_t idx) {
    const auto& qid = query_ids[idx];
    try {
      std::vector<double> scores;
      for (int r = 0; r < cfg.n_rollouts; ++r) {
        const auto output = source(idx, r, rollout_seed(cfg.seed, qid, r));
        scores.push_back(scorer(idx, r, output));
      }
      verdicts[idx] = is_medium(scores, cfg);
    } catch (const std::exception& e) {
      verdicts[idx] = SelectionVerdict{};
      verdicts[idx].skipped = e.what();
    }
    verdicts[idx].query_id = qid;
  });

  std::stable_sort(verdicts.begin(), verdicts.end(),
                   [](const auto& a, const auto& b) { return a.query_id < b.query_id; });

  std::vector<size_t> retained;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    if (verdicts[i].retained) retained.push_back(i);
  }
  if (cfg.target_count && retained.size() > static_cast<size_t>(*cfg.target_count)) {
    std::stable_sort(retained.begin(), retained.end(), [&](size_t a, size_t b) {
      if (verdicts[a].s_range != verdicts[b].s_range) {
        return verdicts[a].s_range > verdicts[b].s_range;
      }
      return verdicts[a].query_id < verdicts[b].query_id;
    });
    retained.resize(static_cast<size_t>(*cfg.target_count));
  }
  for (size_t i : retained) verdicts[i].selected = true;

  SelectionReport report;
  report.summary.total = static_cast<int>(verdicts.size());
  for (const auto& v : verdicts) {
    if (v.skipped) {
      ++report.summary.skipped;
      continue;
    }
    if (v.retained) ++report.summary.retained;
    if (v.selected) ++report.summary.selected;
    if (v.reject_reason == RejectReason::TooEasy) ++report.summary.too_easy;
    if (v.reject_reason == RejectReason::TooHard) ++report.summary.too_hard;
    if (v.reject_reason == RejectReason::LowSpread) ++report.summary.low_spread;
  }
  report.verdicts = std::move(verdicts);
  return report;
}

nlohmann::json to_json(const SelectionVerdict& v) {
  nlohmann::json j = {{"query_id", v.query_id},
                      {"scores", v.scores},
                      {"s_avg", v.s_avg},
                      {"s_range", v.s_range},
                      {"retained", v.retained},
                      {"selected", v.selected},
                      {"reject_reason", nullptr}};
  if (v.reject_reason) j["reject_reason"] = reject_reason_name(*v.reject_reason);
  if (v.skipped) j["skipped"] = *v.skipped;
  return j;
}

nlohmann::json to_json(const SelectionSummary& s) {
  return {{"total", s.total},       {"retained", s.retained}, {"selected", s.selected},
          {"too_easy", s.too_easy}, {"too_hard", s.too_hard}, {"low_spread", s.low_spread},
          {"skipped", s.skipped}};
}

nlohmann::json to_json(const SelectionConfig& c) {
  nlohmann::json j = {{"n_rollouts", c.n_rollouts},   {"avg_low", c.avg_low},
                      {"avg_high", c.avg_high},       {"min_range", c.min_range},
                      {"temperature", c.temperature}, {"seed", c.seed},
                      {"target_count", nullptr},
                      {"score_kind", c.score_kind == ScoreKind::Answer ? "answer" : "total"},
                      {"max_workers", c.max_workers}};
  if (c.target_count) j["target_count"] = *c.target_count;
  return j;
}

SelectionConfig selection_config_from_json(const nlohmann::json& j, SelectionConfig c) {
  c.n_rollouts = j.value("n_rollouts", c.n_rollouts);
  c.avg_low = j.value("avg_low", c.avg_low);
  c.avg_high = j.value("avg_high", c.avg_high);
  c.min_range = j.value("min_range", c.min_range);
  c.temperature = j.value("temperature", c.temperature);
  c.seed = j.value("seed", c.seed);
  if (j.contains("target_count")) {
    if (j.at("target_count").is_null()) {
      c.target_count.reset();
    } else {
      c.target_count = j.at("target_count").get<int>();
    }
  }
  if (j.contains("score_kind")) {
    const auto k = j.at("score_kind").get<std::string>();
    if (k == "answer") c.score_kind = ScoreKind::Answer;
    else if (k == "total") c.score_kind = ScoreKind::Total;
    else throw SelectionError(SelectionError::Kind::InvalidConfig, "unknown score_kind " + k);
  }
  c.max_workers = j.value("max_workers", c.max_workers);
  return c;
}

}  // namespace tracerl::select
