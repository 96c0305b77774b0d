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
#include <vector>

#include <json.hpp>

#include "tracerl/error.hpp"

namespace tracerl::toy {

using Token = int;

/// Token id 0 terminates a completion.
inline constexpr Token kStop = 0;

/// Row-major (rows x cols) matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  void add_scaled(const Matrix& other, double scale);
  double max_abs() const;
  bool operator==(const Matrix&) const = default;
};

/// Linear-softmax order-k Markov policy. The logits for the next token are
/// the bias row plus one weight row per position in the last k tokens:
/// row (j * vocab + token) for the token j+1 places back.
struct PolicyParams {
  int vocab_size = 0;
  int context_order = 0;
  Matrix weights;  // (context_order * vocab_size + 1) x vocab_size

  int bias_row() const { return context_order * vocab_size; }
  bool operator==(const PolicyParams&) const = default;
};

struct Rollout {
  std::vector<Token> prompt_tokens;
  std::vector<Token> completion_tokens;
  std::vector<double> logprobs;  // un-tempered, one per completion token
};

class PolicyError : public Error {
 public:
  enum class Kind { InvalidDimension, TokenOutOfRange, EmptyCompletion };
  PolicyError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Weights ~ N(0, 0.01^2), deterministic per seed.
PolicyParams init_policy(int vocab_size, int context_order, std::uint64_t seed);

/// Un-tempered logits for the context formed by the history's last k tokens.
std::vector<double> logits(const PolicyParams& params, std::span<const Token> history);

/// log-softmax of logits / temperature.
std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0);

/// Samples from softmax(logits / temperature) until STOP or max_len tokens.
Rollout sample_rollout(const PolicyParams& params, std::span<const Token> prompt,
                       double temperature, int max_len, std::uint64_t seed);

/// Per-token log-probabilities of `completion` after `prompt`.
std::vector<double> token_logprobs(const PolicyParams& params, std::span<const Token> prompt,
                                   std::span<const Token> completion);

/// grad += sum_t coeffs[t] * d log pi(completion[t] | context_t) / d weights.
/// Returns the per-token log-probabilities.
std::vector<double> accumulate_weighted_grad(const PolicyParams& params,
                                             std::span<const Token> prompt,
                                             std::span<const Token> completion,
                                             std::span<const double> coeffs, Matrix& grad);

struct LogprobGrad {
  std::vector<double> logprobs;
  Matrix grad;  // d(sum_t logprob_t) / d weights
};

LogprobGrad logprob_and_grad(const PolicyParams& params, std::span<const Token> prompt,
                             std::span<const Token> completion);

/// A supervised target: the completion the policy should imitate after prompt.
struct SupervisedExample {
  std::vector<Token> prompt;
  std::vector<Token> target;
};

/// Full-batch gradient ascent on mean per-sequence log-likelihood.
PolicyParams supervised_fit(PolicyParams params, std::span<const SupervisedExample> examples,
                            int steps, double learning_rate);

nlohmann::json to_json(const PolicyParams& params);
PolicyParams policy_from_json(const nlohmann::json& j);

}  // namespace tracerl::toy
