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

#include "tracerl/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "tracerl/io.hpp"

namespace tracerl::grpo {
namespace {

constexpr double kLogUMin = -27.631021115928547;  // ln(1e-12)
constexpr double kLogUMax = 27.631021115928547;   // ln(1e12)

struct TokenTerms {
  double surrogate;
  double d_surrogate;  // d surrogate / d logp_cur
  double kl;
  double d_kl;  // d kl / d logp_cur
  bool clipped;
};

TokenTerms token_terms(double cur, double old, double ref, double advantage, double eps) {
  TokenTerms t{};
  const double ratio = std::exp(cur - old);
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage;
  if (unclipped <= clipped) {
    t.surrogate = unclipped;
    t.d_surrogate = unclipped;
    t.clipped = false;
  } else {
    t.surrogate = clipped;
    t.d_surrogate = 0.0;
    t.clipped = true;
  }
  const double log_u_raw = ref - cur;
  const double log_u = std::clamp(log_u_raw, kLogUMin, kLogUMax);
  const double u = std::exp(log_u);
  t.kl = u - log_u - 1.0;
  // d(u - ln u - 1)/d cur = (1 - 1/u) * (-u) = 1 - u, zero where u is clamped.
  t.d_kl = (log_u_raw == log_u) ? 1.0 - u : 0.0;
  return t;
}

template <typename OnToken>
ObjectiveStats walk(std::span<const RolloutGroup> groups, const GrpoConfig& cfg,
                    const std::vector<std::vector<std::vector<double>>>& cur, OnToken&& on_token) {
  ObjectiveStats s;
  if (groups.empty()) return s;
  const double group_weight = 1.0 / static_cast<double>(groups.size());
  size_t clipped = 0;
  double kl_sum = 0.0;
  for (size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    const double rollout_weight = group_weight / static_cast<double>(grp.rollouts.size());
    for (size_t i = 0; i < grp.rollouts.size(); ++i) {
      const size_t len = grp.rollouts[i].completion_tokens.size();
      if (len == 0) continue;
      const double inv_len = 1.0 / static_cast<double>(len);
      double surr_sum = 0.0;
      double kl_total = 0.0;
      for (size_t t = 0; t < len; ++t) {
        const auto terms = token_terms(cur[g][i][t], grp.old_logprobs[i][t], grp.ref_logprobs[i][t],
                                       grp.advantages[i], cfg.clip_epsilon);
        surr_sum += terms.surrogate;
        kl_total += terms.kl;
        kl_sum += terms.kl;
        clipped += terms.clipped ? 1 : 0;
        ++s.tokens;
        double coeff;
        if (cfg.kl_mode == KlMode::PerToken) {
          coeff = rollout_weight * inv_len * (terms.d_surrogate - cfg.kl_coeff * terms.d_kl);
        } else {
          coeff = rollout_weight * (inv_len * terms.d_surrogate - cfg.kl_coeff * terms.d_kl);
        }
        on_token(g, i, t, coeff);
      }
      if (cfg.kl_mode == KlMode::PerToken) {
        s.objective += rollout_weight * inv_len * (surr_sum - cfg.kl_coeff * kl_total);
      } else {
        s.objective += rollout_weight * (inv_len * surr_sum - cfg.kl_coeff * kl_total);
      }
    }
  }
  if (s.tokens > 0) {
    s.mean_kl = kl_sum / static_cast<double>(s.tokens);
    s.clip_frac = static_cast<double>(clipped) / static_cast<double>(s.tokens);
  }
  return s;
}

std::vector<std::vector<std::vector<double>>> stored_cur(std::span<const RolloutGroup> groups) {
  std::vector<std::vector<std::vector<double>>> cur;
  cur.reserve(groups.size());
  for (const auto& g : groups) cur.push_back(g.cur_logprobs);
  return cur;
}

const char* kl_mode_name(KlMode m) { return m == KlMode::PerToken ? "per_token" : "sequence"; }
const char* optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "momentum"; }

}  // namespace

void validate(const GrpoConfig& cfg) {
  auto fail = [](const std::string& what) { throw GrpoError(GrpoError::Kind::InvalidConfig, what); };
  if (cfg.group_size < 2) fail("group_size must be at least 2");
  if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0)) fail("clip_epsilon must lie in (0, 1)");
  if (!(cfg.kl_coeff >= 0.0)) fail("kl_coeff must be non-negative");
  if (!(cfg.std_floor > 0.0)) fail("std_floor must be positive");
  if (cfg.steps < 0) fail("steps must be non-negative");
  if (cfg.batch_queries < 1 || cfg.grad_accum < 1) fail("batch_queries and grad_accum must be positive");
  if (!(cfg.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(cfg.temperature > 0.0)) fail("temperature must be positive");
  if (cfg.max_len < 1) fail("max_len must be at least 1");
  if (cfg.epochs < 1) fail("epochs must be at least 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (cfg.max_workers < 1) fail("max_workers must be at least 1");
}

nlohmann::json to_json(const GrpoConfig& cfg) {
  return {{"group_size", cfg.group_size},     {"clip_epsilon", cfg.clip_epsilon},
          {"kl_coeff", cfg.kl_coeff},         {"steps", cfg.steps},
          {"batch_queries", cfg.batch_queries}, {"grad_accum", cfg.grad_accum},
          {"learning_rate", cfg.learning_rate}, {"seed", cfg.seed},
          {"temperature", cfg.temperature},   {"max_len", cfg.max_len},
          {"std_floor", cfg.std_floor},       {"kl_mode", kl_mode_name(cfg.kl_mode)},
          {"optimizer", optimizer_name(cfg.optimizer)}, {"momentum", cfg.momentum},
          {"epochs", cfg.epochs},             {"max_workers", cfg.max_workers}};
}

GrpoConfig config_from_json(const nlohmann::json& j, GrpoConfig c) {
  c.group_size = j.value("group_size", c.group_size);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.kl_coeff = j.value("kl_coeff", c.kl_coeff);
  c.steps = j.value("steps", c.steps);
  c.batch_queries = j.value("batch_queries", c.batch_queries);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.temperature = j.value("temperature", c.temperature);
  c.max_len = j.value("max_len", c.max_len);
  c.std_floor = j.value("std_floor", c.std_floor);
  if (j.contains("kl_mode")) {
    const auto m = j.at("kl_mode").get<std::string>();
    if (m == "per_token") c.kl_mode = KlMode::PerToken;
    else if (m == "sequence") c.kl_mode = KlMode::Sequence;
    else throw GrpoError(GrpoError::Kind::InvalidConfig, "unknown kl_mode " + m);
  }
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o == "sgd") c.optimizer = Optimizer::Sgd;
    else if (o == "momentum") c.optimizer = Optimizer::Momentum;
    else throw GrpoError(GrpoError::Kind::InvalidConfig, "unknown optimizer " + o);
  }
  c.momentum = j.value("momentum", c.momentum);
  c.epochs = j.value("epochs", c.epochs);
  c.max_workers = j.value("max_workers", c.max_workers);
  return c;
}

std::string config_hash(const GrpoConfig& cfg) {
  auto j = to_json(cfg);
  j.erase("steps");
  j.erase("max_workers");
  return io::sha256_hex(j.dump());
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) {
    throw GrpoError(GrpoError::Kind::GroupTooSmall, "a group needs at least two rewards");
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (sd < std_floor) return out;
  for (size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double kl_estimate(double logp_cur, double logp_ref) {
  const double log_u = std::clamp(logp_ref - logp_cur, kLogUMin, kLogUMax);
  return std::exp(log_u) - log_u - 1.0;
}

void check_shapes(const RolloutGroup& g, bool need_cur) {
  auto fail = [&](const std::string& what) {
    throw GrpoError(GrpoError::Kind::ShapeMismatch, "group " + g.query_id + ": " + what);
  };
  const size_t n = g.rollouts.size();
  if (n == 0) fail("no rollouts");
  if (g.old_logprobs.size() != n || g.ref_logprobs.size() != n) fail("log-prob lists per rollout");
  if (need_cur && g.cur_logprobs.size() != n) fail("current log-prob lists per rollout");
  if (g.advantages.size() != n) fail("advantages per rollout");
  for (size_t i = 0; i < n; ++i) {
    const size_t len = g.rollouts[i].completion_tokens.size();
    if (g.old_logprobs[i].size() != len || g.ref_logprobs[i].size() != len ||
        (need_cur && g.cur_logprobs[i].size() != len)) {
      fail("log-prob length differs from completion length");
    }
  }
}

ObjectiveStats objective_stats(std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  for (const auto& g : groups) check_shapes(g, true);
  return walk(groups, cfg, stored_cur(groups), [](size_t, size_t, size_t, double) {});
}

double grpo_objective(std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  return objective_stats(groups, cfg).objective;
}

GradientResult grpo_gradient(std::span<const RolloutGroup> groups, const GrpoConfig& cfg,
                             const toy::PolicyParams& params) {
  for (const auto& g : groups) check_shapes(g, false);
  std::vector<std::vector<std::vector<double>>> cur(groups.size());
  for (size_t g = 0; g < groups.size(); ++g) {
    for (const auto& r : groups[g].rollouts) {
      cur[g].push_back(toy::token_logprobs(params, r.prompt_tokens, r.completion_tokens));
    }
  }
  std::vector<std::vector<std::vector<double>>> coeffs(groups.size());
  for (size_t g = 0; g < groups.size(); ++g) {
    for (const auto& r : groups[g].rollouts) coeffs[g].emplace_back(r.completion_tokens.size(), 0.0);
  }
  GradientResult out;
  out.stats = walk(groups, cfg, cur, [&](size_t g, size_t i, size_t t, double c) {
    coeffs[g][i][t] = c;
  });
  out.grad = toy::Matrix(params.weights.rows, params.weights.cols);
  for (size_t g = 0; g < groups.size(); ++g) {
    for (size_t i = 0; i < groups[g].rollouts.size(); ++i) {
      const auto& r = groups[g].rollouts[i];
      if (r.completion_tokens.empty()) continue;
      toy::accumulate_weighted_grad(params, r.prompt_tokens, r.completion_tokens, coeffs[g][i],
                                    out.grad);
    }
  }
  return out;
}

}  // namespace tracerl::grpo
