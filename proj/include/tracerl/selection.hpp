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

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracerl/error.hpp"

namespace tracerl::select {

/// Which reward component serves as the per-rollout difficulty score.
enum class ScoreKind { Answer, Total };

struct SelectionConfig {
  int n_rollouts = 5;
  double avg_low = 0.2;
  double avg_high = 0.8;
  double min_range = 0.4;
  double temperature = 0.8;
  std::uint64_t seed = 0;
  std::optional<int> target_count;
  ScoreKind score_kind = ScoreKind::Answer;
  int max_workers = 4;
};

/// Slack applied to every threshold comparison so that a mean or range that
/// equals a bound in exact arithmetic is not lost to rounding.
inline constexpr double kBoundaryTolerance = 1e-9;

enum class RejectReason { TooEasy, TooHard, LowSpread };
const char* reject_reason_name(RejectReason r);

struct SelectionVerdict {
  std::string query_id;
  std::vector<double> scores;
  double s_avg = 0.0;
  double s_range = 0.0;
  bool retained = false;
  std::optional<RejectReason> reject_reason;
  bool selected = false;                // retained and within target_count
  std::optional<std::string> skipped;   // scorer error message
};

class SelectionError : public Error {
 public:
  enum class Kind { InvalidConfig, WrongScoreCount, ScoreOutOfRange, EmptyDataset };
  SelectionError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void validate(const SelectionConfig& cfg);

/// Keeps S iff avg_low <= mean(S) <= avg_high and max(S) - min(S) >= min_range.
/// The reject reason is the first failing check in the order: mean too low
/// (TooHard), mean too high (TooEasy), spread too small (LowSpread).
SelectionVerdict is_medium(std::span<const double> scores, const SelectionConfig& cfg);

/// Raw output for rollout `rollout_index` of dataset item `index`.
using CompletionSource =
    std::function<std::string(std::size_t index, int rollout_index, std::uint64_t seed)>;
/// Difficulty score in [0, 1] of one output.
using RolloutScorer =
    std::function<double(std::size_t index, int rollout_index, const std::string& output)>;

struct SelectionSummary {
  int total = 0;
  int retained = 0;
  int selected = 0;
  int too_easy = 0;
  int too_hard = 0;
  int low_spread = 0;
  int skipped = 0;
};

struct SelectionReport {
  std::vector<SelectionVerdict> verdicts;  // sorted by query_id
  SelectionSummary summary;

  std::vector<std::string> selected_ids() const;
};

/// Seed for rollout `rollout_index` of `query_id`; independent of dataset order.
std::uint64_t rollout_seed(std::uint64_t seed, const std::string& query_id, int rollout_index);

/// Runs n_rollouts per item and judges each item. With target_count set and
/// more items retained, keeps those with the largest spread, ties broken by
/// ascending query_id. A scorer or source failure marks that item skipped.
SelectionReport select(std::span<const std::string> query_ids, const CompletionSource& source,
                       const RolloutScorer& scorer, const SelectionConfig& cfg);

nlohmann::json to_json(const SelectionVerdict& v);
nlohmann::json to_json(const SelectionSummary& s);
nlohmann::json to_json(const SelectionConfig& c);
SelectionConfig selection_config_from_json(const nlohmann::json& j, SelectionConfig base = {});

}  // namespace tracerl::select
