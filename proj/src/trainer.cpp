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

#include "tracerl/trainer.hpp"

#include <cmath>

#include "tracerl/io.hpp"
#include "tracerl/parallel.hpp"
#include "tracerl/rng.hpp"

namespace tracerl::grpo {
namespace {

constexpr std::uint64_t kBatchSalt = 0x6261746368ULL;
constexpr std::uint64_t kRolloutSalt = 0x726f6c6cULL;
constexpr std::uint64_t kEvalSalt = 0x6576616cULL;

double checked_reward(const RewardCallback& fn, const SyntheticInstance& inst, int i,
                      const toy::Rollout& r, int step) {  // step is 1-based
  double value;
  try {
    value = fn(inst, i, r);
  } catch (const std::exception& e) {
    throw TrainError(TrainError::Kind::RewardCallbackFailure,
                     "reward callback failed at step " + std::to_string(step) + " for " +
                         inst.query_id + ": " + e.what(),
                     step, inst.query_id);
  }
  if (!(value >= 0.0 && value <= 1.0)) {
    throw TrainError(TrainError::Kind::RewardCallbackFailure,
                     "reward outside [0, 1] at step " + std::to_string(step) + " for " + inst.query_id,
                     step, inst.query_id);
  }
  return value;
}

RolloutGroup build_group(const GrpoConfig& cfg, const SyntheticInstance& inst, size_t slot, int step,
                         const toy::PolicyParams& old_params, const toy::PolicyParams& ref_params,
                         const RewardCallback& reward_fn) {
  RolloutGroup g;
  g.query_id = inst.query_id;
  g.prompt_tokens = inst.prompt_tokens;
  for (int i = 0; i < cfg.group_size; ++i) {
    const auto seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(step), slot,
                                   static_cast<std::uint64_t>(i), kRolloutSalt});
    auto r = toy::sample_rollout(old_params, inst.prompt_tokens, cfg.temperature, cfg.max_len, seed);
    g.rewards.push_back(checked_reward(reward_fn, inst, i, r, step + 1));
    g.old_logprobs.push_back(r.logprobs);
    g.ref_logprobs.push_back(toy::token_logprobs(ref_params, r.prompt_tokens, r.completion_tokens));
    g.rollouts.push_back(std::move(r));
  }
  g.advantages = group_advantages(g.rewards, cfg.std_floor);
  return g;
}

}  // namespace

nlohmann::json to_json(const StepMetrics& m) {
  return {{"step", m.step},
          {"mean_reward", m.mean_reward},
          {"objective", m.objective},
          {"mean_kl", m.mean_kl},
          {"clip_frac", m.clip_frac}};
}

nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j = {{"format", "tracerl-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"step", c.step},
                      {"config_hash", c.config_hash},
                      {"params", toy::to_json(c.params)},
                      {"ref_params", toy::to_json(c.ref_params)}};
  if (c.velocity) j["velocity"] = c.velocity->data;
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "tracerl-checkpoint" ||
      j.value("version", 0) != kCheckpointVersion) {
    throw TrainError(TrainError::Kind::ResumeMismatch, "not a version 1 checkpoint");
  }
  Checkpoint c;
  c.step = j.at("step").get<int>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.params = toy::policy_from_json(j.at("params"));
  c.ref_params = toy::policy_from_json(j.at("ref_params"));
  if (j.contains("velocity")) {
    toy::Matrix v(c.params.weights.rows, c.params.weights.cols);
    v.data = j.at("velocity").get<std::vector<double>>();
    if (v.data.size() != c.params.weights.data.size()) {
      throw TrainError(TrainError::Kind::ResumeMismatch, "velocity shape differs from params");
    }
    c.velocity = std::move(v);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::write_file_atomic(path, to_json(c).dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(nlohmann::json::parse(io::read_file(path)));
}

Checkpoint TrainingReport::checkpoint() const {
  return {steps_completed, config_hash, final_params, ref_params, velocity};
}

TrainingReport train(const GrpoConfig& cfg, std::span<const SyntheticInstance> dataset,
                     const RewardCallback& reward_fn, const toy::PolicyParams& init,
                     const std::optional<Checkpoint>& resume, const TrainOptions& options) {
  validate(cfg);
  if (dataset.empty()) throw TrainError(TrainError::Kind::EmptyDataset, "training dataset is empty");

  TrainingReport report;
  report.config_hash = config_hash(cfg);
  toy::PolicyParams params = init;
  toy::PolicyParams ref = init;
  std::optional<toy::Matrix> velocity;
  int start = 0;
  if (resume) {
    if (resume->config_hash != report.config_hash) {
      throw TrainError(TrainError::Kind::ResumeMismatch,
                       "checkpoint was written with a different configuration");
    }
    params = resume->params;
    ref = resume->ref_params;
    velocity = resume->velocity;
    start = resume->step;
  }
  if (cfg.optimizer == Optimizer::Momentum && !velocity) {
    velocity = toy::Matrix(params.weights.rows, params.weights.cols);
  }

  const size_t queries = static_cast<size_t>(cfg.batch_queries) * cfg.grad_accum;
  for (int step = start; step < cfg.steps; ++step) {
    Rng batch_rng(derive_seed({cfg.seed, static_cast<std::uint64_t>(step), kBatchSalt}));
    std::vector<size_t> picks(queries);
    for (auto& p : picks) p = batch_rng.below(dataset.size());

    const toy::PolicyParams old_params = params;
    std::vector<RolloutGroup> groups(queries);
    try {
      parallel_for(queries, cfg.max_workers, [&](size_t q) {
        groups[q] = build_group(cfg, dataset[picks[q]], q, step, old_params, ref, reward_fn);
      });
    } catch (const TrainError& e) {
      if (e.kind() == TrainError::Kind::RewardCallbackFailure && options.failure_checkpoint) {
        save_checkpoint(*options.failure_checkpoint, {step, report.config_hash, params, ref, velocity});
      }
      throw;
    }

    StepMetrics metrics;
    metrics.step = step + 1;
    double reward_sum = 0.0;
    size_t reward_count = 0;
    for (const auto& g : groups) {
      for (double r : g.rewards) reward_sum += r;
      reward_count += g.rewards.size();
    }
    metrics.mean_reward = reward_sum / static_cast<double>(reward_count);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<GradientResult> per_group(queries);
      parallel_for(queries, cfg.max_workers, [&](size_t q) {
        per_group[q] = grpo_gradient(std::span<const RolloutGroup>(&groups[q], 1), cfg, params);
      });
      // Micro-batch m covers groups [m * batch_queries, (m + 1) * batch_queries);
      // each micro-batch gradient is a mean over its groups and the step
      // gradient is the mean over micro-batches.
      toy::Matrix grad(params.weights.rows, params.weights.cols);
      double objective = 0.0;
      double kl_sum = 0.0;
      double clipped = 0.0;
      size_t tokens = 0;
      const double scale = 1.0 / static_cast<double>(cfg.grad_accum * cfg.batch_queries);
      for (int m = 0; m < cfg.grad_accum; ++m) {
        for (int b = 0; b < cfg.batch_queries; ++b) {
          const auto& res = per_group[static_cast<size_t>(m) * cfg.batch_queries + b];
          grad.add_scaled(res.grad, scale);
          objective += scale * res.stats.objective;
          kl_sum += res.stats.mean_kl * static_cast<double>(res.stats.tokens);
          clipped += res.stats.clip_frac * static_cast<double>(res.stats.tokens);
          tokens += res.stats.tokens;
        }
      }
      if (epoch == 0) {
        metrics.objective = objective;
        metrics.mean_kl = tokens ? kl_sum / static_cast<double>(tokens) : 0.0;
        metrics.clip_frac = tokens ? clipped / static_cast<double>(tokens) : 0.0;
      }
      if (cfg.optimizer == Optimizer::Momentum) {
        for (size_t i = 0; i < grad.data.size(); ++i) {
          velocity->data[i] = cfg.momentum * velocity->data[i] + grad.data[i];
        }
        params.weights.add_scaled(*velocity, cfg.learning_rate);
      } else {
        params.weights.add_scaled(grad, cfg.learning_rate);
      }
    }

    report.metrics.push_back(metrics);
    if (options.on_step) options.on_step(metrics);
  }

  report.final_params = std::move(params);
  report.ref_params = std::move(ref);
  report.velocity = std::move(velocity);
  report.steps_completed = std::max(start, cfg.steps);
  return report;
}

double evaluate_policy(const toy::PolicyParams& params, std::span<const SyntheticInstance> instances,
                       const RewardCallback& reward_fn, double temperature, int max_len,
                       std::uint64_t seed, int rollouts_per_instance, int max_workers) {
  if (instances.empty()) return 0.0;
  std::vector<double> sums(instances.size(), 0.0);
  parallel_for(instances.size(), max_workers, [&](size_t idx) {
    for (int r = 0; r < rollouts_per_instance; ++r) {
      const auto s = derive_seed({seed, idx, static_cast<std::uint64_t>(r), kEvalSalt});
      const auto rollout =
          toy::sample_rollout(params, instances[idx].prompt_tokens, temperature, max_len, s);
      sums[idx] += reward_fn(instances[idx], r, rollout);
    }
  });
  double total = 0.0;
  for (double s : sums) total += s;
  return total / static_cast<double>(instances.size() * rollouts_per_instance);
}

}  // namespace tracerl::grpo
