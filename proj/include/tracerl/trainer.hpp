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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracerl/grpo.hpp"
#include "tracerl/synthetic_task.hpp"
#include "tracerl/toy_policy.hpp"

namespace tracerl::grpo {

using toy::task::SyntheticInstance;

/// Scalar reward in [0, 1] for one sampled completion of an instance.
using RewardCallback =
    std::function<double(const SyntheticInstance& inst, int rollout_index, const toy::Rollout& r)>;

struct StepMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double objective = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  bool operator==(const StepMetrics&) const = default;
};

nlohmann::json to_json(const StepMetrics& m);

struct Checkpoint {
  int step = 0;
  std::string config_hash;
  toy::PolicyParams params;
  toy::PolicyParams ref_params;
  std::optional<toy::Matrix> velocity;  // momentum optimizer state
};

inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class TrainError : public Error {
 public:
  enum class Kind { EmptyDataset, RewardCallbackFailure, ResumeMismatch };
  TrainError(Kind kind, const std::string& what, int step = -1, std::string query_id = "")
      : Error(what), kind_(kind), step_(step), query_id_(std::move(query_id)) {}
  Kind kind() const { return kind_; }
  int step() const { return step_; }
  const std::string& query_id() const { return query_id_; }

 private:
  Kind kind_;
  int step_;
  std::string query_id_;
};

struct TrainOptions {
  /// Receives each step's metrics in step order.
  std::function<void(const StepMetrics&)> on_step;
  /// Where to write a checkpoint before aborting on a reward failure.
  std::optional<std::filesystem::path> failure_checkpoint;
};

struct TrainingReport {
  std::vector<StepMetrics> metrics;
  toy::PolicyParams final_params;
  toy::PolicyParams ref_params;
  std::optional<toy::Matrix> velocity;
  int steps_completed = 0;
  std::string config_hash;

  Checkpoint checkpoint() const;
};

/// GRPO training. Each step snapshots the old policy, samples group_size
/// completions for batch_queries * grad_accum queries, scores them, and makes
/// `epochs` updates, each accumulating the gradient over grad_accum
/// micro-batches. The reference policy is the initial policy (or the one
/// stored in `resume`). Results depend only on cfg.seed and the inputs.
TrainingReport train(const GrpoConfig& cfg, std::span<const SyntheticInstance> dataset,
                     const RewardCallback& reward_fn, const toy::PolicyParams& init,
                     const std::optional<Checkpoint>& resume = std::nullopt,
                     const TrainOptions& options = {});

/// Mean reward of `rollouts_per_instance` sampled completions per instance.
double evaluate_policy(const toy::PolicyParams& params, std::span<const SyntheticInstance> instances,
                       const RewardCallback& reward_fn, double temperature, int max_len,
                       std::uint64_t seed, int rollouts_per_instance = 4, int max_workers = 4);

}  // namespace tracerl::grpo
