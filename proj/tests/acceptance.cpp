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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "stub_server.hpp"
#include "tracerl/eval.hpp"
#include "tracerl/gateway.hpp"
#include "tracerl/grpo.hpp"
#include "tracerl/io.hpp"
#include "tracerl/mock_judge.hpp"
#include "tracerl/pipeline.hpp"
#include "tracerl/reward.hpp"
#include "tracerl/selection.hpp"
#include "tracerl/trace_chain.hpp"

namespace fs = std::filesystem;
using namespace tracerl;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tracerl_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "tracerl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out != nullptr) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

// --- 1 ---------------------------------------------------------------------

toy::PolicyParams perturbed(const toy::PolicyParams& p, std::uint64_t seed, double scale) {
  auto q = p;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& w : q.weights.data) w += n(gen);
  return q;
}

void set_current(std::vector<grpo::RolloutGroup>& groups, const toy::PolicyParams& p) {
  for (auto& g : groups) {
    g.cur_logprobs.clear();
    for (const auto& r : g.rollouts) {
      g.cur_logprobs.push_back(toy::token_logprobs(p, g.prompt_tokens, r.completion_tokens));
    }
  }
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  grpo::GrpoConfig cfg;
  const double h = 1e-5;
  int points = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; points < 10 && seed < 100; ++seed) {
    std::mt19937_64 gen(1000 + seed);
    const auto base = toy::init_policy(5, 2, seed);
    const auto old_p = perturbed(base, gen(), 0.2);
    const auto ref_p = perturbed(base, gen(), 0.2);
    std::vector<grpo::RolloutGroup> groups;
    std::uniform_int_distribution<int> tok(1, 4);
    std::uniform_real_distribution<double> reward(0.0, 1.0);
    for (int q = 0; q < 2; ++q) {
      grpo::RolloutGroup g;
      g.prompt_tokens = {tok(gen), tok(gen)};
      for (int i = 0; i < 4; ++i) {
        auto r = toy::sample_rollout(old_p, g.prompt_tokens, 1.0, 6, gen());
        g.old_logprobs.push_back(r.logprobs);
        g.ref_logprobs.push_back(toy::token_logprobs(ref_p, g.prompt_tokens, r.completion_tokens));
        g.rollouts.push_back(std::move(r));
        g.rewards.push_back(reward(gen));
      }
      g.advantages = grpo::group_advantages(g.rewards, cfg.std_floor);
      groups.push_back(std::move(g));
    }
    const auto cur = perturbed(old_p, gen(), 0.05);
    set_current(groups, cur);

    // Non-boundary: every ratio at least 1e-3 away from a clip edge.
    bool near = false;
    for (const auto& g : groups) {
      for (size_t i = 0; i < g.rollouts.size(); ++i) {
        for (size_t t = 0; t < g.cur_logprobs[i].size(); ++t) {
          const double rho = std::exp(g.cur_logprobs[i][t] - g.old_logprobs[i][t]);
          near = near || std::abs(rho - (1 - cfg.clip_epsilon)) < 1e-3 ||
                 std::abs(rho - (1 + cfg.clip_epsilon)) < 1e-3;
        }
      }
    }
    if (near) continue;
    ++points;

    for (auto mode : {grpo::KlMode::PerToken, grpo::KlMode::Sequence}) {
      cfg.kl_mode = mode;
      const auto g = grpo::grpo_gradient(groups, cfg, cur);
      for (size_t i = 0; i < cur.weights.data.size(); ++i) {
        auto plus = cur, minus = cur;
        plus.weights.data[i] += h;
        minus.weights.data[i] -= h;
        auto gp = groups, gm = groups;
        set_current(gp, plus);
        set_current(gm, minus);
        const double fd = (grpo::grpo_objective(gp, cfg) - grpo::grpo_objective(gm, cfg)) / (2 * h);
        worst = std::max(worst, std::abs(g.grad.data[i] - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {points == 10 && worst <= 1e-4 && secs < 10.0,
          fmt("points=%d max_rel_err=%.3g time=%.2fs", points, worst, secs)};
}

// --- 2 ---------------------------------------------------------------------

Outcome advantage_check() {
  std::mt19937_64 gen(2);
  std::uniform_int_distribution<int> size(2, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_mean = 0.0, worst_std = 0.0;
  int constant_bad = 0;
  for (int k = 0; k < 1000; ++k) {
    const int g = size(gen);
    std::vector<double> r(g);
    for (double& x : r) x = u(gen);
    const auto a = grpo::group_advantages(r, 1e-8);
    double m = 0.0;
    for (double x : a) m += x;
    m /= g;
    double v = 0.0;
    for (double x : a) v += (x - m) * (x - m);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(std::sqrt(v / g) - 1.0));

    const auto flat = grpo::group_advantages(std::vector<double>(g, u(gen)), 1e-8);
    for (double x : flat) constant_bad += x != 0.0;
  }
  return {worst_mean <= 1e-9 && worst_std <= 1e-9 && constant_bad == 0,
          fmt("max|mean|=%.2g max|std-1|=%.2g nonzero_in_constant=%d", worst_mean, worst_std,
              constant_bad)};
}

// --- 3 ---------------------------------------------------------------------

Outcome kl_check() {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> log_ratio(std::log(1e-3), std::log(1e3));
  int negative = 0;
  for (int k = 0; k < 10000; ++k) negative += grpo::kl_estimate(0.0, log_ratio(gen)) < 0.0;
  const double at_one = grpo::kl_estimate(0.3, 0.3);
  const double at_two = grpo::kl_estimate(0.0, std::log(2.0));
  return {negative == 0 && std::abs(at_one) <= 1e-12 && std::abs(at_two - 0.306853) <= 1e-6,
          fmt("negative=%d kl(1)=%.3g kl(2)=%.7f", negative, at_one, at_two)};
}

// --- 4 ---------------------------------------------------------------------

Outcome reward_check() {
  const reward::RewardWeights standard{0.6, 0.3, 0.1};
  const double example = reward::compose_reward(0.5, 0.8, 1.0, standard).r_total;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int out_of_range = 0, gating_bad = 0, formula_bad = 0;
  for (int k = 0; k < 10000; ++k) {
    reward::RewardWeights w = standard;
    if (k % 2 == 1) {
      const double a = u(gen), b = u(gen), c = u(gen), s = a + b + c;
      w = {a / s, b / s, 1.0 - a / s - b / s};
      if (w.gamma < 0.0) w.gamma = 0.0;
    }
    const double ra = k % 5 == 0 ? 0.0 : u(gen), rt = u(gen), rf = u(gen) < 0.5 ? 0.0 : 1.0;
    const auto b = reward::compose_reward(ra, rt, rf, w);
    out_of_range += b.r_total < 0.0 || b.r_total > 1.0;
    if (ra == 0.0) {
      gating_bad += b.r_total != w.gamma * rf || !b.gated;
    } else {
      formula_bad += std::abs(b.r_total - (w.alpha * ra + w.beta * rt + w.gamma * rf)) > 1e-12;
    }
  }
  return {std::abs(example - 0.64) <= 1e-12 && out_of_range == 0 && gating_bad == 0 &&
              formula_bad == 0,
          fmt("example=%.12g out_of_range=%d gating_mismatch=%d formula_mismatch=%d", example,
              out_of_range, gating_bad, formula_bad)};
}

// --- 5 ---------------------------------------------------------------------

Outcome selection_check() {
  select::SelectionConfig cfg;
  int disagree = 0;
  std::array<int, 5> k{};
  for (int idx = 0; idx < 7776; ++idx) {
    int rest = idx;
    for (int& v : k) {
      v = rest % 6;
      rest /= 6;
    }
    const int sum = k[0] + k[1] + k[2] + k[3] + k[4];
    const int spread = *std::max_element(k.begin(), k.end()) - *std::min_element(k.begin(), k.end());
    const bool expect = sum >= 5 && sum <= 20 && spread >= 2;
    std::vector<double> s;
    for (int v : k) s.push_back(v / 5.0);
    disagree += select::is_medium(s, cfg).retained != expect;
  }

  const auto a = select::is_medium(std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0}, cfg);
  const auto b = select::is_medium(std::vector<double>{1, 1, 1, 1, 1}, cfg);
  const auto c = select::is_medium(std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5}, cfg);
  const bool cases = a.retained && std::abs(a.s_avg - 0.6) < 1e-12 &&
                     std::abs(a.s_range - 0.8) < 1e-12 &&
                     b.reject_reason == select::RejectReason::TooEasy &&
                     c.reject_reason == select::RejectReason::LowSpread;
  const bool edges = select::is_medium(std::vector<double>{0, 0, 0, 0.4, 0.6}, cfg).retained &&
                     select::is_medium(std::vector<double>{1, 1, 1, 0.6, 0.4}, cfg).retained &&
                     select::is_medium(std::vector<double>{0.4, 0.4, 0.4, 0.8, 0.8}, cfg).retained;

  const auto t0 = Clock::now();
  const auto data = toy::task::make_dataset(1, 5000);
  const auto policy = toy::task::warm_start_policy(toy::task::WarmStart::AnswerOnly, 7);
  pipeline::JudgeSetup judge{pipeline::JudgeOptions{}};
  cfg.seed = 7;
  cfg.target_count = 2000;
  const auto r1 = pipeline::select_synthetic(data, policy, judge.judge(), {}, cfg);
  cfg.max_workers = 1;
  const auto r2 = pipeline::select_synthetic(data, policy, judge.judge(), {}, cfg);
  const auto ids = r1.selected_ids();
  const bool same = ids == r2.selected_ids();
  return {disagree == 0 && cases && edges && ids.size() == 2000 && same,
          fmt("grid_disagreements=%d examples=%s boundaries=%s retained=%d selected=%zu "
              "repeatable=%s time=%.1fs",
              disagree, cases ? "ok" : "bad", edges ? "ok" : "bad", r1.summary.retained,
              ids.size(), same ? "yes" : "no", seconds_since(t0))};
}

// --- 6 ---------------------------------------------------------------------

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const auto root = scratch("e2e");
  std::vector<json> reports;
  std::vector<std::string> checkpoints;
  for (const char* run : {"a", "b"}) {
    const auto d = root / run;
    const std::string seed = "7";
    if (cli({"gen-synth", "--count", "5000", "--seed", seed, "--out", (d / "data").string()}) != 0 ||
        cli({"select", "--data", (d / "data/instances.jsonl").string(), "--target", "2000",
             "--seed", seed, "--out", (d / "sel").string()}) != 0 ||
        cli({"train", "--data", (d / "sel/selected.jsonl").string(), "--heldout",
             (d / "data/heldout.jsonl").string(), "--steps", "2000", "--group-size", "6",
             "--temperature", "0.8", "--seed", seed, "--out", (d / "train").string()}) != 0) {
      return {false, "pipeline command failed"};
    }
    reports.push_back(json::parse(io::read_file(d / "train/report.json")));
    checkpoints.push_back(io::read_file(d / "train/checkpoint.json"));
  }
  const double secs = seconds_since(t0) / 2.0;
  const double init = reports[0].at("initial_heldout_reward").get<double>();
  const double fin = reports[0].at("final_heldout_reward").get<double>();
  const bool deterministic = reports[0] == reports[1] && checkpoints[0] == checkpoints[1];
  fs::remove_all(root);
  return {fin - init >= 0.15 && deterministic && secs < 300.0,
          fmt("heldout R_total %.4f -> %.4f (delta %+.4f) deterministic=%s time_per_run=%.1fs",
              init, fin, fin - init, deterministic ? "yes" : "no", secs)};
}

// --- 7 ---------------------------------------------------------------------

Outcome eval_check() {
  // Five runs with mean 36.446 and sample standard deviation 0.179.
  const double mean = 36.446, sd = 0.179;
  std::vector<double> runs;
  for (int i = -2; i <= 2; ++i) runs.push_back(mean + sd / std::sqrt(2.5) * i);
  const double cv = eval::stability(runs).cv_percent;

  const std::map<std::string, double> judge_row = {{"PA", 31.43}, {"CE", 41.27}, {"Overall", 36.42}};
  const std::map<std::string, double> human_row = {{"PA", 35.30}, {"CE", 39.50}, {"Overall", 34.94}};
  const double pa = eval::human_delta(judge_row, human_row).per_category.at("PA");

  pipeline::JudgeSetup setup{pipeline::JudgeOptions{}};
  std::vector<eval::EvalRecord> records;
  const char* preds[] = {"caries mild", "caries severe", "", "abscess", "calculus mild periodontitis"};
  const char* golds[] = {"caries mild", "abscess severe", "calculus mild"};
  for (int i = 0; i < 60; ++i) {
    records.push_back({"s" + std::to_string(i), i % 3 ? "PA" : "CE", "q", golds[i % 3],
                       preds[i % 5], {}});
  }
  std::vector<double> overall;
  for (int r = 0; r < 5; ++r) {
    const auto judged = eval::judge_all(setup.judge(), records, kEvalPromptId, 4,
                                        "acceptance-" + std::to_string(r));
    overall.push_back(eval::aggregate(judged).overall);
  }
  const double mock_sd = eval::stability(overall).stddev;
  return {std::abs(cv - 0.490) <= 0.005 && std::abs(pa - 3.87) <= 0.01 && mock_sd == 0.0,
          fmt("cv=%.4f%% delta_pa=%+.4f mock_stddev=%g", cv, pa, mock_sd)};
}

// --- 8 ---------------------------------------------------------------------

Outcome trace_check() {
  const auto corpus = io::read_jsonl(fs::path(TRACERL_TEST_FIXTURES) / "trace_corpus.jsonl");
  int agree = 0;
  for (const auto& item : corpus) {
    const double expect = item.at("label") == "valid" ? 1.0 : 0.0;
    agree += trace::format_score(item.at("text").get<std::string>()) == expect;
  }
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(0, 512);
  const char* tags[] = {"<Caption>", "</Caption>", "<Think>", "</Think>", "<Answer>", "</Answer>"};
  int raised = 0, bad_value = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const int n = len(gen);
    for (int j = 0; j < n; ++j) {
      if (byte(gen) < 12) {
        s += tags[byte(gen) % 6];
      } else {
        s.push_back(static_cast<char>(byte(gen)));
      }
    }
    try {
      const double v = trace::format_score(s);
      bad_value += v != 0.0 && v != 1.0;
    } catch (...) {
      ++raised;
    }
  }
  return {corpus.size() >= 40 && agree == static_cast<int>(corpus.size()) && raised == 0 &&
              bad_value == 0,
          fmt("corpus %d/%zu agree, fuzz raised=%d bad_value=%d", agree, corpus.size(), raised,
              bad_value)};
}

// --- 9 ---------------------------------------------------------------------

Outcome replay_check() {
  const auto root = scratch("replay");
  const auto s = (root / "s").string();
  const auto cache = (root / "cache").string();
  bool ok = cli({"gen-synth", "--count", "10", "--heldout-count", "60", "--seed", "9", "--out", s}) == 0;
  // Predictions: the gold answer for every third sample, another answer otherwise.
  std::vector<json> preds;
  int i = 0;
  for (const auto& b : io::read_jsonl(root / "s/heldout_bench.jsonl")) {
    preds.push_back({{"sample_id", b.at("sample_id")},
                     {"prediction", i++ % 3 == 0 ? b.at("gold").get<std::string>() : "caries mild"}});
  }
  io::write_jsonl(root / "pred.jsonl", preds);
  const std::vector<std::string> common = {"eval", "--bench", s + "/heldout_bench.jsonl", "--pred",
                                           (root / "pred.jsonl").string(), "--repeats", "3",
                                           "--cache-dir", cache};
  auto online = common, offline = common;
  online.insert(online.end(), {"--out", (root / "online").string()});
  offline.insert(offline.end(), {"--offline", "--out", (root / "offline").string()});
  ok = ok && cli(online) == 0 && cli(offline) == 0;

  int compared = 0, differing = 0;
  if (ok) {
    for (const auto& e : fs::directory_iterator(root / "online")) {
      const auto name = e.path().filename();
      if (name == "manifest.json") continue;
      ++compared;
      const auto other = root / "offline" / name;
      differing += !fs::exists(other) || io::read_file(e.path()) != io::read_file(other);
    }
  }

  testing::StubServer server(std::make_shared<gateway::MockJudge>());
  server.script_statuses({500, 500, 200});
  gateway::Gateway gw;
  gw.set_sleeper([](double) {});
  gw.register_endpoint(server.endpoint("stub"));
  gateway::CompletionRequest req;
  req.endpoint_id = "stub";
  req.model_name = "judge";
  req.messages = {{"user", "[[GOLD]]\ncaries mild\n[[/GOLD]]\n[[PREDICTION]]\ncaries mild\n[[/PREDICTION]]"}};
  req.request_tag = "acceptance";
  const auto reply = gw.complete(req);
  fs::remove_all(root);
  return {ok && compared >= 5 && differing == 0 && reply.attempt_count == 3,
          fmt("files_compared=%d differing=%d stub_attempts=%d", compared, differing,
              reply.attempt_count)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"GRPO gradient vs central differences", gradient_check},
      {"group advantage normalization", advantage_check},
      {"KL estimator", kl_check},
      {"reward composition", reward_check},
      {"difficulty selection", selection_check},
      {"end-to-end training improves held-out reward", end_to_end},
      {"evaluation arithmetic", eval_check},
      {"trace format contract", trace_check},
      {"gateway cache replay and retry", replay_check},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << name << ": " << o.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
