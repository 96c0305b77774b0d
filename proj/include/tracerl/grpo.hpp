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
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracerl/error.hpp"
#include "tracerl/toy_policy.hpp"

namespace tracerl::grpo {

enum class KlMode {
  PerToken,  // beta * KL inside the per-token average
  Sequence,  // beta * sum_t KL, outside the 1/|o_i| average
};

enum class Optimizer { Sgd, Momentum };

struct GrpoConfig {
  int group_size = 6;
  double clip_epsilon = 0.2;
  double kl_coeff = 0.04;
  int steps = 2000;
  int batch_queries = 4;
  int grad_accum = 3;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
  double temperature = 0.8;
  int max_len = 32;
  double std_floor = 1e-8;
  KlMode kl_mode = KlMode::PerToken;
  Optimizer optimizer = Optimizer::Sgd;
  double momentum = 0.9;
  int epochs = 1;       // optimization passes over each rollout batch
  int max_workers = 4;  // rollout and reward parallelism
};

class GrpoError : public Error {
 public:
  enum class Kind { InvalidConfig, GroupTooSmall, ShapeMismatch };
  GrpoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void validate(const GrpoConfig& cfg);
nlohmann::json to_json(const GrpoConfig& cfg);
GrpoConfig config_from_json(const nlohmann::json& j, GrpoConfig base = {});

/// SHA-256 over every field except `steps`, so a run can be resumed with a
/// larger step budget.
std::string config_hash(const GrpoConfig& cfg);

/// One query with its sampled completions and the per-token log-probabilities
/// under the old, reference and current policies.
struct RolloutGroup {
  std::string query_id;
  std::vector<toy::Token> prompt_tokens;
  std::vector<toy::Rollout> rollouts;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<std::vector<double>> ref_logprobs;
  std::vector<std::vector<double>> cur_logprobs;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// (r_i - mean) / std with the population std. All zeros when std < std_floor.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

/// u - ln u - 1 with u = exp(logp_ref - logp_cur) clamped to [1e-12, 1e12].
double kl_estimate(double logp_cur, double logp_ref);

struct ObjectiveStats {
  double objective = 0.0;
  double mean_kl = 0.0;    // over all tokens
  double clip_frac = 0.0;  // tokens whose clipped branch is strictly smaller
  std::size_t tokens = 0;
};

/// Clipped group-relative surrogate minus the KL penalty, averaged over
/// tokens within a completion, completions within a group, and groups.
/// Uses each group's cur_logprobs. Higher is better.
double grpo_objective(std::span<const RolloutGroup> groups, const GrpoConfig& cfg);
ObjectiveStats objective_stats(std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

struct GradientResult {
  toy::Matrix grad;
  ObjectiveStats stats;  // objective at params
};

/// Exact gradient of grpo_objective w.r.t. the policy weights, with the
/// current log-probabilities recomputed from params. At a clip boundary the
/// unclipped branch is used.
GradientResult grpo_gradient(std::span<const RolloutGroup> groups, const GrpoConfig& cfg,
                             const toy::PolicyParams& params);

/// Throws ShapeMismatch unless every per-rollout list lines up.
void check_shapes(const RolloutGroup& g, bool need_cur);

}  // namespace tracerl::grpo
