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

#include "commands.hpp"

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tracerl/eval.hpp"
#include "tracerl/io.hpp"
#include "tracerl/parallel.hpp"
#include "tracerl/pipeline.hpp"
#include "tracerl/rng.hpp"
#include "tracerl/trace_chain.hpp"

namespace tracerl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::uint64_t kTrainSeedStride = 10'000'000;
constexpr std::uint64_t kHeldoutOffset = 5'000'000;
constexpr std::uint64_t kHeldoutEvalSalt = 0x686f6c64ULL;
constexpr std::uint64_t kPredictionSalt = 0x70726564ULL;

// ---------------------------------------------------------------------------
// Configuration

json default_config() {
  json selection = to_json(select::SelectionConfig{});
  selection.erase("seed");
  selection.erase("max_workers");
  json grpo = grpo::to_json(grpo::GrpoConfig{});
  grpo.erase("seed");
  grpo.erase("max_workers");
  return {
      {"seed", 0},
      {"workers", 4},
      {"out", "out"},
      {"judge",
       {{"endpoint", "mock"},
        {"endpoints_file", nullptr},
        {"cache_dir", nullptr},
        {"offline", false},
        {"retry_base_delay_ms", 1000.0},
        {"max_concurrency", 4},
        {"asset_dir", default_asset_dir().string()}}},
      {"reward_weights", reward::to_json(reward::RewardWeights{})},
      {"synth", {{"count", 5000}, {"heldout_count", 200}}},
      {"selection", selection},
      {"grpo", grpo},
      {"eval", {{"repeats", 1}, {"average", "micro"}, {"heldout_rollouts", 4}}},
      {"parse", {{"jsonl", false}, {"strict", false}}},
      {"paths",
       {{"data", nullptr},
        {"heldout", nullptr},
        {"policy", nullptr},
        {"init", nullptr},
        {"resume", nullptr},
        {"outputs", nullptr},
        {"bench", nullptr},
        {"pred", nullptr},
        {"human_scores", nullptr},
        {"input", nullptr}}},
  };
}

// Rejects keys that the defaults do not know, one level into each section.
void check_known_keys(const json& file, const json& defaults) {
  if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : file.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (defaults.at(key).is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + key + "' must be an object");
      for (const auto& [sub, _] : value.items()) {
        if (!defaults.at(key).contains(sub)) {
          throw ConfigError("unknown config key '" + key + "." + sub + "'");
        }
      }
    }
  }
}

json load_config_file(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  // A run manifest carries its resolved config and can be replayed directly.
  if (j.is_object() && j.value("format", "") == "tracerl-manifest") return j.at("config");
  return j;
}

// Collects flag values that were given on the command line, keyed by the JSON
// pointer of the config field they override.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer,
                   const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    appliers_.push_back([opt, value, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }
  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& pointer,
                    const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, help);
    appliers_.push_back([opt, value, pointer](json& j) {
      if (opt->count() > 0) j[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }
  void apply(json& j) const {
    for (const auto& f : appliers_) f(j);
  }

 private:
  std::vector<std::function<void(json&)>> appliers_;
};

std::optional<fs::path> config_path(const json& cfg, const std::string& key) {
  const auto& paths = cfg.at("paths");
  if (!paths.contains(key) || paths.at(key).is_null()) return std::nullopt;
  const auto s = paths.at(key).get<std::string>();
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

fs::path required_input(const json& cfg, const std::string& key, const std::string& flag) {
  auto p = config_path(cfg, key);
  if (!p) throw ConfigError("missing required input " + flag);
  if (!fs::exists(*p)) throw ConfigError("input not found: " + p->string());
  return *p;
}

std::optional<fs::path> optional_input(const json& cfg, const std::string& key) {
  auto p = config_path(cfg, key);
  if (p && !fs::exists(*p)) throw ConfigError("input not found: " + p->string());
  return p;
}

std::uint64_t global_seed(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

int workers(const json& cfg) {
  const int w = cfg.at("workers").get<int>();
  if (w < 1) throw ConfigError("workers must be at least 1");
  return w;
}

// ---------------------------------------------------------------------------
// Run context: resolved config, inputs and outputs recorded in the manifest.

class Run {
 public:
  Run(std::string command, json cfg, std::ostream& out)
      : command_(std::move(command)), cfg_(std::move(cfg)), out_(out) {}

  const json& cfg() const { return cfg_; }
  std::ostream& out() { return out_; }

  fs::path out_dir() {
    const fs::path dir = cfg_.at("out").get<std::string>();
    fs::create_directories(dir);
    return dir;
  }

  void input(const std::string& name, const fs::path& path) {
    inputs_[name] = {{"path", path.string()}, {"sha256", io::file_sha256(path)}};
  }

  fs::path output(const std::string& name) {
    outputs_.insert(name);
    return out_dir() / name;
  }

  void write_json(const std::string& name, const json& j) {
    io::write_file_atomic(output(name), j.dump(2) + "\n");
  }

  void write_jsonl(const std::string& name, const std::vector<json>& rows) {
    io::write_jsonl(output(name), rows);
  }

  void write_manifest() {
    json outputs = json::object();
    for (const auto& name : outputs_) outputs[name] = io::file_sha256(out_dir() / name);
    json manifest = {{"format", "tracerl-manifest"},
                     {"versions",
                      {{"tracerl", TRACERL_VERSION},
                       {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                       {"cli11", CLI11_VERSION}}},
                     {"command", command_},
                     {"seed", global_seed(cfg_)},
                     {"config_hash", config_hash()},
                     {"config", cfg_},
                     {"inputs", inputs_},
                     {"outputs", outputs}};
    io::write_file_atomic(out_dir() / "manifest.json", manifest.dump(2) + "\n");
  }

  // Hash over the settings that can change results.
  std::string config_hash() const {
    json h = cfg_;
    h.erase("out");
    h.erase("workers");
    h["judge"].erase("offline");
    h["judge"].erase("cache_dir");
    h["judge"].erase("asset_dir");
    h.erase("paths");
    return io::sha256_hex(command_ + "\n" + h.dump());
  }

 private:
  std::string command_;
  json cfg_;
  std::ostream& out_;
  json inputs_ = json::object();
  std::set<std::string> outputs_;
};

pipeline::JudgeOptions judge_options(const json& cfg) {
  const auto& j = cfg.at("judge");
  pipeline::JudgeOptions o;
  o.endpoint_id = j.at("endpoint").get<std::string>();
  if (!j.at("endpoints_file").is_null()) {
    o.endpoint_config = fs::path(j.at("endpoints_file").get<std::string>());
    if (!fs::exists(*o.endpoint_config)) {
      throw ConfigError("endpoint config not found: " + o.endpoint_config->string());
    }
  }
  if (!j.at("cache_dir").is_null()) o.cache_dir = fs::path(j.at("cache_dir").get<std::string>());
  o.offline = j.at("offline").get<bool>();
  if (o.offline && !o.cache_dir) throw ConfigError("--offline needs --cache-dir");
  o.asset_dir = j.at("asset_dir").get<std::string>();
  o.retry_base_delay_ms = j.at("retry_base_delay_ms").get<double>();
  o.max_concurrency = j.at("max_concurrency").get<int>();
  return o;
}

std::unique_ptr<pipeline::JudgeSetup> make_judge(Run& run) {
  const auto opts = judge_options(run.cfg());
  auto setup = std::make_unique<pipeline::JudgeSetup>(opts);
  for (const auto& id : setup->prompts().ids()) {
    run.input("prompt:" + id, opts.asset_dir / "prompts" / (id + ".txt"));
  }
  if (opts.endpoint_config) run.input("endpoints", *opts.endpoint_config);
  return setup;
}

reward::RewardWeights weights(const json& cfg) {
  return reward::weights_from_json(cfg.at("reward_weights"));
}

std::vector<toy::task::SyntheticInstance> read_instances(const fs::path& path) {
  std::vector<toy::task::SyntheticInstance> out;
  for (const auto& j : io::read_jsonl(path)) out.push_back(toy::task::instance_from_json(j));
  if (out.empty()) throw ConfigError("no instances in " + path.string());
  return out;
}

toy::PolicyParams read_policy(const fs::path& path) {
  return toy::policy_from_json(json::parse(io::read_file(path)));
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gen_synth(Run& run) {
  const auto& cfg = run.cfg();
  const int count = cfg.at("synth").at("count").get<int>();
  const int heldout = cfg.at("synth").at("heldout_count").get<int>();
  if (count < 1 || count >= static_cast<int>(kHeldoutOffset)) {
    throw ConfigError("count must lie in [1, " + std::to_string(kHeldoutOffset) + ")");
  }
  if (heldout < 0 || heldout >= static_cast<int>(kTrainSeedStride - kHeldoutOffset)) {
    throw ConfigError("heldout count out of range");
  }
  const std::uint64_t first = 1 + global_seed(cfg) * kTrainSeedStride;
  const auto train = toy::task::make_dataset(first, count);
  const auto held = toy::task::make_dataset(first + kHeldoutOffset, heldout);

  std::vector<json> rows;
  for (const auto& inst : train) rows.push_back(toy::task::to_json(inst));
  run.write_jsonl("instances.jsonl", rows);
  rows.clear();
  std::vector<json> bench;
  for (const auto& inst : held) {
    rows.push_back(toy::task::to_json(inst));
    const auto gold = toy::task::answer_text(inst.gold_answer);
    bench.push_back({{"sample_id", inst.query_id},
                     {"category", gold.substr(0, gold.find(' '))},
                     {"question", toy::task::question_text(inst.prompt_tokens)},
                     {"gold", gold}});
  }
  run.write_jsonl("heldout.jsonl", rows);
  run.write_jsonl("heldout_bench.jsonl", bench);
  run.write_manifest();
  run.out() << "wrote " << count << " instances and " << heldout << " held-out instances to "
            << run.out_dir().string() << "\n";
  return kExitOk;
}

int cmd_select(Run& run) {
  const auto& cfg = run.cfg();
  const auto data_path = required_input(cfg, "data", "--data");
  run.input("data", data_path);
  const auto data = read_instances(data_path);

  auto scfg = select::selection_config_from_json(cfg.at("selection"));
  scfg.seed = global_seed(cfg);
  scfg.max_workers = workers(cfg);
  select::validate(scfg);

  toy::PolicyParams policy;
  if (auto p = optional_input(cfg, "policy")) {
    run.input("policy", *p);
    policy = read_policy(*p);
  } else {
    policy = toy::task::warm_start_policy(toy::task::WarmStart::AnswerOnly, scfg.seed);
  }
  const auto w = weights(cfg);
  auto judge = make_judge(run);
  const auto report = pipeline::select_synthetic(data, policy, judge->judge(), w, scfg,
                                                 cfg.at("grpo").at("max_len").get<int>());

  std::vector<json> rows;
  for (const auto& v : report.verdicts) rows.push_back(select::to_json(v));
  rows.push_back({{"summary", select::to_json(report.summary)}});
  run.write_jsonl("verdicts.jsonl", rows);
  run.write_json("summary.json", select::to_json(report.summary));

  std::set<std::string> chosen;
  for (const auto& id : report.selected_ids()) chosen.insert(id);
  rows.clear();
  for (const auto& inst : data) {
    if (chosen.count(inst.query_id) > 0) rows.push_back(toy::task::to_json(inst));
  }
  run.write_jsonl("selected.jsonl", rows);
  run.write_manifest();
  run.out() << select::to_json(report.summary).dump() << "\n";
  return kExitOk;
}

std::string predict(const toy::PolicyParams& params, const toy::task::SyntheticInstance& inst,
                    double temperature, int max_len, std::uint64_t seed) {
  const auto r = toy::sample_rollout(params, inst.prompt_tokens, temperature, max_len, seed);
  const auto text = toy::task::render_completion(r.prompt_tokens, r.completion_tokens);
  return trace::extract_answer(text).value_or(text);
}

int cmd_train(Run& run) {
  const auto& cfg = run.cfg();
  const auto data_path = required_input(cfg, "data", "--data");
  run.input("data", data_path);
  const auto data = read_instances(data_path);

  auto gcfg = grpo::config_from_json(cfg.at("grpo"));
  gcfg.seed = global_seed(cfg);
  gcfg.max_workers = workers(cfg);
  grpo::validate(gcfg);

  toy::PolicyParams init;
  if (auto p = optional_input(cfg, "init")) {
    run.input("init", *p);
    init = read_policy(*p);
  } else {
    init = toy::task::warm_start_policy(toy::task::WarmStart::Trace, gcfg.seed);
  }
  std::optional<grpo::Checkpoint> resume;
  if (auto p = optional_input(cfg, "resume")) {
    run.input("resume", *p);
    resume = grpo::load_checkpoint(*p);
  }
  std::vector<toy::task::SyntheticInstance> heldout;
  if (auto p = optional_input(cfg, "heldout")) {
    run.input("heldout", *p);
    heldout = read_instances(*p);
  }

  const auto w = weights(cfg);
  auto judge = make_judge(run);
  const auto reward_fn = pipeline::synthetic_reward(judge->judge(), w);
  const int heldout_rollouts = cfg.at("eval").at("heldout_rollouts").get<int>();
  const auto eval_seed = derive_seed({gcfg.seed, kHeldoutEvalSalt});
  auto heldout_reward = [&](const toy::PolicyParams& p) {
    return grpo::evaluate_policy(p, heldout, reward_fn, gcfg.temperature, gcfg.max_len, eval_seed,
                                 heldout_rollouts, gcfg.max_workers);
  };

  const auto& start = resume ? resume->params : init;
  std::optional<double> initial;
  if (!heldout.empty()) initial = heldout_reward(start);

  io::JsonlSink metrics(run.output("metrics.jsonl"));
  grpo::TrainOptions opts;
  opts.on_step = [&](const grpo::StepMetrics& m) { metrics.append(grpo::to_json(m)); };
  opts.failure_checkpoint = run.out_dir() / "failure_checkpoint.json";
  const auto report = grpo::train(gcfg, data, reward_fn, init, resume, opts);
  metrics.flush();

  grpo::save_checkpoint(run.output("checkpoint.json"), report.checkpoint());
  run.write_json("policy.json", toy::to_json(report.final_params));

  json summary = {{"steps_completed", report.steps_completed},
                  {"config_hash", report.config_hash},
                  {"train_instances", data.size()},
                  {"heldout_instances", heldout.size()},
                  {"initial_heldout_reward", nullptr},
                  {"final_heldout_reward", nullptr},
                  {"improvement", nullptr}};
  if (!report.metrics.empty()) summary["last_step"] = grpo::to_json(report.metrics.back());
  if (!heldout.empty()) {
    const double final_reward = heldout_reward(report.final_params);
    summary["initial_heldout_reward"] = *initial;
    summary["final_heldout_reward"] = final_reward;
    summary["improvement"] = final_reward - *initial;

    std::vector<json> preds(heldout.size());
    parallel_for(heldout.size(), gcfg.max_workers, [&](std::size_t i) {
      preds[i] = {{"sample_id", heldout[i].query_id},
                  {"prediction",
                   predict(report.final_params, heldout[i], gcfg.temperature, gcfg.max_len,
                           derive_seed({gcfg.seed, kPredictionSalt, i}))}};
    });
    run.write_jsonl("heldout_predictions.jsonl", preds);
  }
  run.write_json("report.json", summary);
  run.write_manifest();
  run.out() << summary.dump() << "\n";
  return kExitOk;
}

int cmd_reward(Run& run) {
  const auto& cfg = run.cfg();
  const auto outputs_path = required_input(cfg, "outputs", "--outputs");
  run.input("outputs", outputs_path);
  std::map<std::string, toy::task::SyntheticInstance> instances;
  if (auto p = optional_input(cfg, "data")) {
    run.input("data", *p);
    for (auto& inst : read_instances(*p)) instances.emplace(inst.query_id, inst);
  }

  std::vector<reward::RolloutContext> contexts;
  std::vector<std::string> texts;
  for (const auto& j : io::read_jsonl(outputs_path)) {
    reward::RolloutContext c;
    c.query_id = j.at("query_id").get<std::string>();
    c.rollout_index = j.value("rollout_index", 0);
    auto it = instances.find(c.query_id);
    if (it != instances.end()) c = pipeline::synthetic_context(it->second, c.rollout_index);
    c.question = j.value("question", c.question);
    c.gold = j.value("gold", c.gold);
    if (c.gold.empty()) throw ConfigError("no gold answer for " + c.query_id);
    contexts.push_back(std::move(c));
    texts.push_back(j.at("output").get<std::string>());
  }

  const auto w = weights(cfg);
  auto judge = make_judge(run);
  const auto handle = judge->judge();
  std::vector<reward::RewardBreakdown> scores(contexts.size());
  parallel_for(contexts.size(), workers(cfg), [&](std::size_t i) {
    scores[i] = reward::reward_rollout(handle, contexts[i], texts[i], w);
  });

  std::vector<json> rows;
  double total = 0.0, answer = 0.0, format = 0.0;
  int gated = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    rows.push_back(reward::score_record(contexts[i], scores[i]));
    total += scores[i].r_total;
    answer += scores[i].r_answer;
    format += scores[i].r_format;
    gated += scores[i].gated ? 1 : 0;
  }
  run.write_jsonl("scores.jsonl", rows);
  const double n = scores.empty() ? 1.0 : static_cast<double>(scores.size());
  const json summary = {{"count", scores.size()},
                        {"mean_r_total", total / n},
                        {"mean_r_answer", answer / n},
                        {"mean_r_format", format / n},
                        {"gated", gated}};
  run.write_json("summary.json", summary);
  run.write_manifest();
  run.out() << summary.dump() << "\n";
  return kExitOk;
}

std::map<std::string, double> read_score_map(const fs::path& path) {
  const auto j = json::parse(io::read_file(path));
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<double>();
  return out;
}

int cmd_eval(Run& run) {
  const auto& cfg = run.cfg();
  const auto bench = required_input(cfg, "bench", "--bench");
  const auto pred = required_input(cfg, "pred", "--pred");
  run.input("bench", bench);
  run.input("pred", pred);
  const int repeats = cfg.at("eval").at("repeats").get<int>();
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  const auto avg = cfg.at("eval").at("average").get<std::string>();
  if (avg != "micro" && avg != "macro") throw ConfigError("average must be micro or macro");
  const auto mode = avg == "micro" ? eval::AverageMode::Micro : eval::AverageMode::Macro;
  std::optional<std::map<std::string, double>> human;
  if (auto p = optional_input(cfg, "human_scores")) {
    run.input("human_scores", *p);
    human = read_score_map(*p);
  }

  const auto records = eval::load_records(bench, pred);
  auto judge = make_judge(run);
  const auto handle = judge->judge();

  std::vector<eval::EvalAggregate> runs;
  std::vector<json> aggregate_rows;
  for (int r = 1; r <= repeats; ++r) {
    const auto tag = "eval-run-" + std::to_string(r);
    const auto judged = eval::judge_all(handle, records, kEvalPromptId, workers(cfg), tag);
    runs.push_back(eval::aggregate(judged, mode, "run-" + std::to_string(r)));
    aggregate_rows.push_back(eval::to_json(runs.back()));
    if (r == 1) {
      std::vector<json> rows;
      for (const auto& rec : judged) rows.push_back(eval::to_json(rec));
      run.write_jsonl("records.jsonl", rows);
    }
  }
  run.write_json("aggregate.json", eval::to_json(runs.front()));
  run.write_jsonl("aggregates.jsonl", aggregate_rows);
  const auto table = eval::render_table(runs.front());
  io::write_file_atomic(run.output("table.txt"), table);

  if (repeats >= 2) {
    std::vector<double> overall;
    for (const auto& a : runs) overall.push_back(a.overall);
    run.write_json("stability.json", eval::to_json(eval::stability(overall)));
  }
  if (human) {
    std::map<std::string, double> judge_scores;
    for (const auto& a : runs) {
      for (const auto& [cat, cs] : a.per_category) judge_scores[cat] += cs.mean_score / runs.size();
      judge_scores[eval::kOverallKey] += a.overall / runs.size();
    }
    run.write_json("delta.json", eval::to_json(eval::human_delta(judge_scores, *human)));
  }
  run.write_manifest();
  run.out() << table;
  return kExitOk;
}

const char* format_error_name(trace::FormatError::Kind k) {
  switch (k) {
    case trace::FormatError::Kind::MissingSection: return "MissingSection";
    case trace::FormatError::Kind::DuplicateSection: return "DuplicateSection";
    case trace::FormatError::Kind::OrderViolation: return "OrderViolation";
    case trace::FormatError::Kind::EmptySection: return "EmptySection";
  }
  return "";
}

json parse_one(const std::string& text) {
  json r;
  try {
    const auto s = trace::parse_sections(text);
    r["valid"] = true;
    r["format_score"] = 1.0;
    r["sections"] = {{"caption", s.caption}, {"think", s.think}, {"answer", s.answer}};
    try {
      r["chain"] = trace::to_json(trace::chain_from_sections(s));
    } catch (const trace::InvariantViolation& e) {
      r["chain_error"] = e.what();
    }
  } catch (const trace::FormatError& e) {
    r["valid"] = false;
    r["format_score"] = 0.0;
    r["error"] = {{"kind", format_error_name(e.kind())}, {"section", e.section()}};
  }
  return r;
}

int cmd_parse_trace(Run& run) {
  const auto& cfg = run.cfg();
  const auto input = config_path(cfg, "input");
  if (!input) throw ConfigError("missing required input --input");
  std::string content;
  if (input->string() == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    content = ss.str();
  } else {
    if (!fs::exists(*input)) throw ConfigError("input not found: " + input->string());
    content = io::read_file(*input);
  }

  std::vector<json> results;
  if (cfg.at("parse").at("jsonl").get<bool>()) {
    std::istringstream lines(content);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = json::parse(line);
      auto r = parse_one(j.at("text").get<std::string>());
      if (j.contains("id")) r["id"] = j.at("id");
      results.push_back(std::move(r));
    }
  } else {
    results.push_back(parse_one(content));
  }

  bool all_valid = true;
  for (const auto& r : results) {
    run.out() << r.dump() << "\n";
    all_valid = all_valid && r.at("valid").get<bool>();
  }
  return all_valid || !cfg.at("parse").at("strict").get<bool>() ? kExitOk : kExitPipelineFailure;
}

// ---------------------------------------------------------------------------
// Error reporting

void report_error(std::ostream& err, const std::string& type, const std::string& message, int code) {
  err << json{{"error", type}, {"message", message}, {"exit_code", code}}.dump() << "\n";
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  auto fail = [&](const char* type, const std::exception& e, int code) {
    report_error(err, type, e.what(), code);
    return code;
  };
  try {
    return fn();
  } catch (const ConfigError& e) {
    return fail("ConfigError", e, kExitConfigError);
  } catch (const grpo::GrpoError& e) {
    return fail("GrpoError", e,
                e.kind() == grpo::GrpoError::Kind::InvalidConfig ? kExitConfigError
                                                                 : kExitPipelineFailure);
  } catch (const select::SelectionError& e) {
    return fail("SelectionError", e,
                e.kind() == select::SelectionError::Kind::InvalidConfig ? kExitConfigError
                                                                        : kExitPipelineFailure);
  } catch (const reward::RewardError& e) {
    return fail("RewardError", e,
                e.kind() == reward::RewardError::Kind::WeightInvariantViolation
                    ? kExitConfigError
                    : kExitPipelineFailure);
  } catch (const gateway::GatewayError& e) {
    return fail("GatewayError", e,
                e.kind() == gateway::GatewayError::Kind::EndpointUnknown ? kExitConfigError
                                                                         : kExitPipelineFailure);
  } catch (const JudgeError& e) {
    return fail("JudgeError", e,
                e.kind() == JudgeError::Kind::UnknownPrompt ? kExitConfigError
                                                            : kExitPipelineFailure);
  } catch (const grpo::TrainError& e) {
    return fail("TrainError", e, kExitPipelineFailure);
  } catch (const eval::EvalError& e) {
    return fail("EvalError", e, kExitPipelineFailure);
  } catch (const json::exception& e) {
    return fail("JsonError", e, kExitPipelineFailure);
  } catch (const Error& e) {
    return fail("Error", e, kExitPipelineFailure);
  } catch (const std::exception& e) {
    return fail("InternalError", e, kExitPipelineFailure);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace-guided GRPO toolkit: synthetic data, selection, training, rewards, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every command");

  Overrides ov;
  std::string config_file;
  app.add_option("--config", config_file,
                 "JSON config file or run manifest; flags given on the command line win");
  ov.add<std::uint64_t>(&app, "--seed", "/seed", "Seed for every stochastic component");
  ov.add<std::string>(&app, "--out", "/out", "Output directory");
  ov.add<int>(&app, "--workers", "/workers", "Worker threads for rollouts and judging");
  ov.add<std::string>(&app, "--judge", "/judge/endpoint", "Judge endpoint id; 'mock' is built in");
  ov.add<std::string>(&app, "--endpoints", "/judge/endpoints_file", "Endpoint config JSON");
  ov.add<std::string>(&app, "--cache-dir", "/judge/cache_dir", "Response cache directory");
  ov.flag(&app, "--offline", "/judge/offline", "Serve judge calls from the cache only");
  ov.add<std::string>(&app, "--assets", "/judge/asset_dir", "Directory holding prompts/ fixtures");
  ov.add<double>(&app, "--retry-base-ms", "/judge/retry_base_delay_ms", "First retry delay");

  auto add_weights = [&](CLI::App* sub) {
    ov.add<double>(sub, "--alpha", "/reward_weights/alpha", "Answer reward weight");
    ov.add<double>(sub, "--beta", "/reward_weights/beta", "Trace reward weight");
    ov.add<double>(sub, "--gamma", "/reward_weights/gamma", "Format reward weight");
  };

  auto* gen = app.add_subcommand("gen-synth", "Generate synthetic instances and a held-out set");
  ov.add<int>(gen, "--count", "/synth/count", "Number of training instances");
  ov.add<int>(gen, "--heldout-count", "/synth/heldout_count", "Number of held-out instances");

  auto* sel = app.add_subcommand("select", "Keep medium-difficulty instances");
  ov.add<std::string>(sel, "--data", "/paths/data", "Instance JSONL");
  ov.add<std::string>(sel, "--policy", "/paths/policy",
                      "Policy JSON to sample from (default: answer-only warm start)");
  ov.add<int>(sel, "--n", "/selection/n_rollouts", "Rollouts per instance");
  ov.add<double>(sel, "--avg-low", "/selection/avg_low", "Lowest kept mean score");
  ov.add<double>(sel, "--avg-high", "/selection/avg_high", "Highest kept mean score");
  ov.add<double>(sel, "--min-range", "/selection/min_range", "Smallest kept score range");
  ov.add<int>(sel, "--target", "/selection/target_count", "Number of instances to keep");
  ov.add<double>(sel, "--temperature", "/selection/temperature", "Sampling temperature");
  ov.add<std::string>(sel, "--score", "/selection/score_kind", "Difficulty score: answer|total")
      ->check(CLI::IsMember({"answer", "total"}));
  add_weights(sel);

  auto* tr = app.add_subcommand("train", "GRPO training on synthetic instances");
  ov.add<std::string>(tr, "--data", "/paths/data", "Training instance JSONL");
  ov.add<std::string>(tr, "--heldout", "/paths/heldout", "Held-out instance JSONL");
  ov.add<std::string>(tr, "--init", "/paths/init",
                      "Initial policy JSON (default: trace-format warm start)");
  ov.add<std::string>(tr, "--resume", "/paths/resume", "Checkpoint to resume from");
  ov.add<int>(tr, "--steps", "/grpo/steps", "Optimizer steps");
  ov.add<double>(tr, "--lr", "/grpo/learning_rate", "Learning rate");
  ov.add<int>(tr, "--group-size", "/grpo/group_size", "Completions per query");
  ov.add<double>(tr, "--clip-eps", "/grpo/clip_epsilon", "Ratio clip half-width");
  ov.add<double>(tr, "--kl-coeff", "/grpo/kl_coeff", "KL penalty coefficient");
  ov.add<std::string>(tr, "--kl-mode", "/grpo/kl_mode", "per_token|sequence")
      ->check(CLI::IsMember({"per_token", "sequence"}));
  ov.add<int>(tr, "--batch", "/grpo/batch_queries", "Queries per micro-batch");
  ov.add<int>(tr, "--accum", "/grpo/grad_accum", "Micro-batches per step");
  ov.add<double>(tr, "--temperature", "/grpo/temperature", "Rollout temperature");
  ov.add<int>(tr, "--max-len", "/grpo/max_len", "Maximum completion length");
  ov.add<std::string>(tr, "--optimizer", "/grpo/optimizer", "sgd|momentum")
      ->check(CLI::IsMember({"sgd", "momentum"}));
  ov.add<double>(tr, "--momentum", "/grpo/momentum", "Momentum coefficient");
  ov.add<int>(tr, "--epochs", "/grpo/epochs", "Updates per rollout batch");
  ov.add<int>(tr, "--heldout-rollouts", "/eval/heldout_rollouts",
              "Samples per held-out instance in the report");
  add_weights(tr);

  auto* rw = app.add_subcommand("reward", "Score raw outputs with the composite reward");
  ov.add<std::string>(rw, "--outputs", "/paths/outputs",
                      "JSONL {query_id, output, rollout_index?, question?, gold?}");
  ov.add<std::string>(rw, "--data", "/paths/data", "Instance JSONL supplying questions and golds");
  add_weights(rw);

  auto* ev = app.add_subcommand("eval", "Judge predictions against a benchmark");
  ov.add<std::string>(ev, "--bench", "/paths/bench", "JSONL {sample_id, category, question, gold}");
  ov.add<std::string>(ev, "--pred", "/paths/pred", "JSONL {sample_id, prediction}");
  ov.add<int>(ev, "--repeats", "/eval/repeats", "Judging runs for the stability report");
  ov.add<std::string>(ev, "--human-scores", "/paths/human_scores",
                      "JSON map category -> human score for the delta table");
  ov.add<std::string>(ev, "--average", "/eval/average", "micro|macro")
      ->check(CLI::IsMember({"micro", "macro"}));

  auto* pt = app.add_subcommand("parse-trace", "Check responses against the trace format");
  ov.add<std::string>(pt, "--input", "/paths/input", "Response text file, or - for stdin");
  ov.flag(pt, "--jsonl", "/parse/jsonl", "Input is JSONL {id?, text}");
  ov.flag(pt, "--strict", "/parse/strict", "Exit 1 when any response is invalid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    const int code = app.exit(e, o, er);
    out << o.str();
    if (code != 0) {
      report_error(err, "ConfigError", er.str().empty() ? e.what() : er.str(), kExitConfigError);
      return kExitConfigError;
    }
    return kExitOk;
  }

  return guarded(err, [&]() -> int {
    json cfg = default_config();
    if (!config_file.empty()) {
      const auto file = load_config_file(config_file);
      check_known_keys(file, cfg);
      cfg.merge_patch(file);
    }
    ov.apply(cfg);
    // merge_patch drops keys set to null; put the defaults back.
    const auto defaults = default_config();
    for (const auto& [k, v] : defaults.items()) {
      if (!cfg.contains(k)) cfg[k] = v;
      if (v.is_object()) {
        for (const auto& [sk, sv] : v.items()) {
          if (!cfg[k].contains(sk)) cfg[k][sk] = sv;
        }
      }
    }

    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    Run run(name, cfg, out);
    try {
      if (name == "gen-synth") return cmd_gen_synth(run);
      if (name == "select") return cmd_select(run);
      if (name == "train") return cmd_train(run);
      if (name == "reward") return cmd_reward(run);
      if (name == "eval") return cmd_eval(run);
      return cmd_parse_trace(run);
    } catch (const json::type_error& e) {
      throw ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
  });
}

}  // namespace tracerl::cli
