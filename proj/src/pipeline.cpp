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

#include "tracerl/pipeline.hpp"

#include "tracerl/mock_judge.hpp"

namespace tracerl::pipeline {

JudgeSetup::JudgeSetup(const JudgeOptions& options) : endpoint_id_(options.endpoint_id) {
  gateway::GatewayOptions gopts;
  gopts.cache_dir = options.cache_dir;
  gopts.offline = options.offline;
  gopts.retry.base_delay_ms = options.retry_base_delay_ms;
  gateway_ = std::make_unique<gateway::Gateway>(gopts);
  gateway_->register_responder("mock", std::make_shared<gateway::MockJudge>(),
                               options.max_concurrency);
  if (options.endpoint_config) {
    for (const auto& ep : gateway::load_endpoint_configs(*options.endpoint_config)) {
      gateway_->register_endpoint(ep);
    }
  }
  if (!gateway_->has_endpoint(endpoint_id_)) {
    throw gateway::GatewayError(gateway::GatewayError::Kind::EndpointUnknown,
                                "unknown endpoint " + endpoint_id_);
  }
  model_name_ = gateway_->model_for(endpoint_id_);
  prompts_ = trace::TemplateRegistry::load_directory(options.asset_dir / "prompts");
  for (const char* id : {kAnswerPromptId, kTracePromptId, kEvalPromptId}) {
    if (!prompts_.contains(id)) {
      throw JudgeError(JudgeError::Kind::UnknownPrompt,
                       std::string("missing prompt fixture ") + id + " under " +
                           (options.asset_dir / "prompts").string());
    }
  }
}

Judge JudgeSetup::judge() const {
  Judge j;
  j.client = gateway_.get();
  j.endpoint_id = endpoint_id_;
  j.model_name = model_name_;
  j.prompts = &prompts_;
  return j;
}

reward::RolloutContext synthetic_context(const toy::task::SyntheticInstance& inst,
                                         int rollout_index) {
  return {inst.query_id, rollout_index, toy::task::question_text(inst.prompt_tokens),
          toy::task::answer_text(inst.gold_answer)};
}

grpo::RewardCallback synthetic_reward(const Judge& judge, const reward::RewardWeights& weights,
                                      reward::ScoreLog* log) {
  return [judge, weights, log](const toy::task::SyntheticInstance& inst, int rollout_index,
                               const toy::Rollout& r) {
    const auto text = toy::task::render_completion(r.prompt_tokens, r.completion_tokens);
    return reward::reward_rollout(judge, synthetic_context(inst, rollout_index), text, weights, log)
        .r_total;
  };
}

select::SelectionReport select_synthetic(std::span<const toy::task::SyntheticInstance> instances,
                                         const toy::PolicyParams& policy, const Judge& judge,
                                         const reward::RewardWeights& weights,
                                         const select::SelectionConfig& cfg, int max_len) {
  std::vector<std::string> ids;
  ids.reserve(instances.size());
  for (const auto& inst : instances) ids.push_back(inst.query_id);
  auto source = [&](size_t idx, int, std::uint64_t seed) {
    const auto r =
        toy::sample_rollout(policy, instances[idx].prompt_tokens, cfg.temperature, max_len, seed);
    return toy::task::render_completion(r.prompt_tokens, r.completion_tokens);
  };
  auto scorer = [&](size_t idx, int rollout_index, const std::string& output) {
    const auto b = reward::reward_rollout(judge, synthetic_context(instances[idx], rollout_index),
                                          output, weights);
    return cfg.score_kind == select::ScoreKind::Answer ? b.r_answer : b.r_total;
  };
  return select::select(ids, source, scorer, cfg);
}

}  // namespace tracerl::pipeline
