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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tracerl/gateway.hpp"
#include "tracerl/judge.hpp"
#include "tracerl/reward.hpp"
#include "tracerl/selection.hpp"
#include "tracerl/trainer.hpp"

namespace tracerl::pipeline {

struct JudgeOptions {
  std::string endpoint_id = "mock";
  std::optional<std::filesystem::path> endpoint_config;
  std::optional<std::filesystem::path> cache_dir;
  bool offline = false;
  std::filesystem::path asset_dir = default_asset_dir();
  double retry_base_delay_ms = 1000.0;
  int max_concurrency = 4;
};

/// Owns the gateway and prompt fixtures a Judge points into.
class JudgeSetup {
 public:
  explicit JudgeSetup(const JudgeOptions& options);

  Judge judge() const;
  gateway::Gateway& gateway() { return *gateway_; }
  const trace::TemplateRegistry& prompts() const { return prompts_; }

 private:
  std::unique_ptr<gateway::Gateway> gateway_;
  trace::TemplateRegistry prompts_;
  std::string endpoint_id_;
  std::string model_name_;
};

reward::RolloutContext synthetic_context(const toy::task::SyntheticInstance& inst,
                                         int rollout_index);

/// r_total of the rendered completion, scored through the judge.
grpo::RewardCallback synthetic_reward(const Judge& judge, const reward::RewardWeights& weights,
                                      reward::ScoreLog* log = nullptr);

/// Difficulty selection over synthetic instances, with completions sampled
/// from `policy` and scored by the configured reward component.
select::SelectionReport select_synthetic(std::span<const toy::task::SyntheticInstance> instances,
                                         const toy::PolicyParams& policy, const Judge& judge,
                                         const reward::RewardWeights& weights,
                                         const select::SelectionConfig& cfg,
                                         int max_len = toy::task::kDefaultMaxLen);

}  // namespace tracerl::pipeline
