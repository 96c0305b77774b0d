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

#include "tracerl/mock_judge.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "tracerl/synthetic_task.hpp"

namespace tracerl::gateway {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Items of the sub-block that starts at a line equal to `header`.
std::vector<std::string> sub_block_items(std::string_view think, std::string_view header) {
  std::vector<std::string> items;
  bool inside = false;
  size_t start = 0;
  while (start <= think.size()) {
    size_t end = think.find('\n', start);
    if (end == std::string_view::npos) end = think.size();
    const auto line = trim(think.substr(start, end - start));
    start = end + 1;
    if (line == "Hypotheses:" || line == "Knowledge:" || line == "Verification:") {
      inside = line == header;
      continue;
    }
    if (inside && !line.empty()) items.emplace_back(line);
  }
  return items;
}

std::string format_score(double s) {
  std::ostringstream out;
  out << s;
  return out.str();
}

}  // namespace

std::optional<std::string> find_block(std::string_view text, std::string_view name) {
  const std::string open = "[[" + std::string(name) + "]]";
  const std::string close = "[[/" + std::string(name) + "]]";
  const size_t begin = text.rfind(open);
  if (begin == std::string_view::npos) return std::nullopt;
  const size_t body = begin + open.size();
  const size_t end = text.find(close, body);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(trim(text.substr(body, end - body)));
}

std::vector<std::string> answer_parts(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      parts.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

double mock_answer_score(std::string_view gold, std::string_view prediction) {
  const auto pred_parts = answer_parts(prediction);
  if (pred_parts.empty()) return 0.0;
  const auto gold_parts = answer_parts(gold);
  const std::set<std::string> g(gold_parts.begin(), gold_parts.end());
  const std::set<std::string> p(pred_parts.begin(), pred_parts.end());
  if (g == p) return 1.0;
  const bool overlap = std::any_of(p.begin(), p.end(), [&](const auto& w) { return g.count(w) > 0; });
  return overlap ? 0.5 : 0.0;
}

std::array<int, 3> mock_trace_dims(std::string_view caption, std::string_view think,
                                   std::string_view answer, std::string_view gold) {
  const auto hypotheses = sub_block_items(think, "Hypotheses:");
  const auto knowledge = sub_block_items(think, "Knowledge:");

  int d1 = 0;
  if (auto diagnosis = toy::task::diagnosis_of(gold)) {
    const std::string expected = "K-" + std::string(toy::task::kDiagnoses[*diagnosis]) + ":";
    const auto matching = std::count_if(knowledge.begin(), knowledge.end(), [&](const auto& k) {
      return k.find(expected) != std::string::npos;
    });
    if (matching > 0) d1 = matching == static_cast<long>(knowledge.size()) ? 2 : 1;
  } else {
    d1 = knowledge.empty() ? 0 : 1;
  }

  const int d2 = !hypotheses.empty() && !trim(caption).empty() ? 1 : 0;

  const double a = mock_answer_score(gold, answer);
  const int d3 = a >= 1.0 ? 2 : (a > 0.0 ? 1 : 0);
  return {d1, d2, d3};
}

std::string MockJudge::reply(const CompletionRequest& req) {
  std::string user;
  for (const auto& m : req.messages) {
    if (m.role == "user") user += m.content + "\n";
  }
  const auto gold = find_block(user, "GOLD").value_or("");
  if (auto think = find_block(user, "THINK")) {
    const auto caption = find_block(user, "CAPTION").value_or("");
    const auto answer = find_block(user, "ANSWER").value_or("");
    const auto d = mock_trace_dims(caption, *think, answer, gold);
    return "Structural review of the reasoning trace.\nD1: " + std::to_string(d[0]) +
           "\nD2: " + std::to_string(d[1]) + "\nD3: " + std::to_string(d[2]);
  }
  const auto prediction = find_block(user, "PREDICTION").value_or("");
  return "Word-set comparison against the reference answer.\nSCORE: " +
         format_score(mock_answer_score(gold, prediction));
}

}  // namespace tracerl::gateway
