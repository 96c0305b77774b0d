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

#include "tracerl/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tracerl/rng.hpp"

namespace tracerl::toy {
namespace {

void check_token(const PolicyParams& params, Token t) {
  if (t < 0 || t >= params.vocab_size) {
    throw PolicyError(PolicyError::Kind::TokenOutOfRange,
                      "token " + std::to_string(t) + " outside vocabulary of size " +
                          std::to_string(params.vocab_size));
  }
}

// Active feature rows for the context ending at history.back().
std::vector<int> active_rows(const PolicyParams& params, std::span<const Token> history) {
  std::vector<int> rows;
  rows.reserve(params.context_order + 1);
  rows.push_back(params.bias_row());
  const int n = static_cast<int>(history.size());
  for (int j = 0; j < params.context_order && j < n; ++j) {
    rows.push_back(j * params.vocab_size + history[n - 1 - j]);
  }
  return rows;
}

std::vector<double> logits_from_rows(const PolicyParams& params, const std::vector<int>& rows) {
  std::vector<double> out(params.vocab_size, 0.0);
  for (int r : rows) {
    const double* w = &params.weights.data[static_cast<size_t>(r) * params.vocab_size];
    for (int v = 0; v < params.vocab_size; ++v) out[v] += w[v];
  }
  return out;
}

}  // namespace

void Matrix::add_scaled(const Matrix& other, double scale) {
  for (size_t i = 0; i < data.size(); ++i) data[i] += scale * other.data[i];
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double x : data) m = std::max(m, std::abs(x));
  return m;
}

PolicyParams init_policy(int vocab_size, int context_order, std::uint64_t seed) {
  if (vocab_size < 2 || context_order < 1) {
    throw PolicyError(PolicyError::Kind::InvalidDimension,
                      "policy needs vocab_size >= 2 and context_order >= 1");
  }
  PolicyParams p;
  p.vocab_size = vocab_size;
  p.context_order = context_order;
  p.weights = Matrix(context_order * vocab_size + 1, vocab_size);
  Rng rng(derive_seed({seed, 0x706f6c696379ULL}));
  for (double& w : p.weights.data) w = 0.01 * rng.normal();
  return p;
}

std::vector<double> logits(const PolicyParams& params, std::span<const Token> history) {
  for (Token t : history) check_token(params, t);
  return logits_from_rows(params, active_rows(params, history));
}

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l / temperature);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l / temperature - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / temperature - lse;
  return out;
}

Rollout sample_rollout(const PolicyParams& params, std::span<const Token> prompt,
                       double temperature, int max_len, std::uint64_t seed) {
  Rollout r;
  r.prompt_tokens.assign(prompt.begin(), prompt.end());
  for (Token t : prompt) check_token(params, t);
  std::vector<Token> history(prompt.begin(), prompt.end());
  Rng rng(seed);
  for (int step = 0; step < max_len; ++step) {
    const auto z = logits_from_rows(params, active_rows(params, history));
    const auto sample_lp = log_softmax(z, temperature);
    const double u = rng.uniform();
    double cum = 0.0;
    Token chosen = params.vocab_size - 1;
    for (int v = 0; v < params.vocab_size; ++v) {
      cum += std::exp(sample_lp[v]);
      if (u < cum) {
        chosen = v;
        break;
      }
    }
    // Guard against the cumulative sum falling short of 1 by rounding.
    if (std::exp(sample_lp[chosen]) == 0.0) {
      chosen = static_cast<Token>(std::max_element(sample_lp.begin(), sample_lp.end()) -
                                  sample_lp.begin());
    }
    const auto lp = log_softmax(z, 1.0);
    r.completion_tokens.push_back(chosen);
    r.logprobs.push_back(lp[chosen]);
    history.push_back(chosen);
    if (chosen == kStop) break;
  }
  return r;
}

std::vector<double> token_logprobs(const PolicyParams& params, std::span<const Token> prompt,
                                   std::span<const Token> completion) {
  for (Token t : prompt) check_token(params, t);
  for (Token t : completion) check_token(params, t);
  std::vector<Token> history(prompt.begin(), prompt.end());
  std::vector<double> out;
  out.reserve(completion.size());
  for (Token t : completion) {
    const auto lp = log_softmax(logits_from_rows(params, active_rows(params, history)));
    out.push_back(lp[t]);
    history.push_back(t);
  }
  return out;
}

std::vector<double> accumulate_weighted_grad(const PolicyParams& params,
                                             std::span<const Token> prompt,
                                             std::span<const Token> completion,
                                             std::span<const double> coeffs, Matrix& grad) {
  if (completion.empty()) {
    throw PolicyError(PolicyError::Kind::EmptyCompletion, "completion is empty");
  }
  for (Token t : prompt) check_token(params, t);
  for (Token t : completion) check_token(params, t);
  const int V = params.vocab_size;
  std::vector<Token> history(prompt.begin(), prompt.end());
  std::vector<double> out;
  out.reserve(completion.size());
  for (size_t t = 0; t < completion.size(); ++t) {
    const auto rows = active_rows(params, history);
    const auto lp = log_softmax(logits_from_rows(params, rows));
    const Token tok = completion[t];
    out.push_back(lp[tok]);
    const double c = coeffs[t];
    if (c != 0.0) {
      // d log p(tok) / d logit_v = [v == tok] - p_v, and each active row
      // feeds the logits with unit weight.
      for (int r : rows) {
        double* g = &grad.data[static_cast<size_t>(r) * V];
        for (int v = 0; v < V; ++v) g[v] -= c * std::exp(lp[v]);
        g[tok] += c;
      }
    }
    history.push_back(tok);
  }
  return out;
}

LogprobGrad logprob_and_grad(const PolicyParams& params, std::span<const Token> prompt,
                             std::span<const Token> completion) {
  LogprobGrad out;
  out.grad = Matrix(params.weights.rows, params.weights.cols);
  std::vector<double> ones(completion.size(), 1.0);
  out.logprobs = accumulate_weighted_grad(params, prompt, completion, ones, out.grad);
  return out;
}

PolicyParams supervised_fit(PolicyParams params, std::span<const SupervisedExample> examples,
                            int steps, double learning_rate) {
  if (examples.empty()) return params;
  const double scale = 1.0 / static_cast<double>(examples.size());
  for (int s = 0; s < steps; ++s) {
    Matrix grad(params.weights.rows, params.weights.cols);
    for (const auto& ex : examples) {
      std::vector<double> ones(ex.target.size(), scale);
      accumulate_weighted_grad(params, ex.prompt, ex.target, ones, grad);
    }
    params.weights.add_scaled(grad, learning_rate);
  }
  return params;
}

nlohmann::json to_json(const PolicyParams& params) {
  return {{"vocab_size", params.vocab_size},
          {"context_order", params.context_order},
          {"weights", params.weights.data}};
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  PolicyParams p;
  p.vocab_size = j.at("vocab_size").get<int>();
  p.context_order = j.at("context_order").get<int>();
  if (p.vocab_size < 2 || p.context_order < 1) {
    throw PolicyError(PolicyError::Kind::InvalidDimension, "invalid policy dimensions");
  }
  p.weights = Matrix(p.context_order * p.vocab_size + 1, p.vocab_size);
  auto data = j.at("weights").get<std::vector<double>>();
  if (data.size() != p.weights.data.size()) {
    throw PolicyError(PolicyError::Kind::InvalidDimension, "weight count does not match dimensions");
  }
  for (double w : data) {
    if (!std::isfinite(w)) throw PolicyError(PolicyError::Kind::InvalidDimension, "non-finite weight");
  }
  p.weights.data = std::move(data);
  return p;
}

}  // namespace tracerl::toy
