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

#include "tracerl/selection.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <random>
#include <set>

using namespace tracerl::select;

namespace {

// Brute-force filter on the grid {0, 0.2, ..., 1.0} in exact integers: score
// k/5 gives mean sum/25, so the rule is 5 <= sum <= 20 and max - min >= 2.
bool grid_keep(const std::array<int, 5>& k) {
  int sum = 0, lo = 5, hi = 0;
  for (int v : k) {
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return sum >= 5 && sum <= 20 && hi - lo >= 2;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("q" + std::to_string(1000 + i));
  return out;
}

// Outputs encode the rollout seed; the score is a hash of it.
std::string seed_text(std::size_t, int, std::uint64_t seed) { return std::to_string(seed); }
double seed_score(std::size_t, int, const std::string& out) {
  return static_cast<double>(std::stoull(out) % 6) / 5.0;
}

}  // namespace

TEST_CASE("worked verdicts") {
  SelectionConfig cfg;
  const auto a = is_medium(std::vector<double>{0.2, 0.4, 0.6, 0.8, 1.0}, cfg);
  CHECK(a.retained);
  CHECK(a.s_avg == doctest::Approx(0.6));
  CHECK(a.s_range == doctest::Approx(0.8));

  const auto b = is_medium(std::vector<double>{1, 1, 1, 1, 1}, cfg);
  CHECK_FALSE(b.retained);
  CHECK(b.reject_reason == RejectReason::TooEasy);

  const auto c = is_medium(std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5}, cfg);
  CHECK(c.reject_reason == RejectReason::LowSpread);

  const auto d = is_medium(std::vector<double>{0, 0, 0, 0, 0.2}, cfg);
  CHECK(d.reject_reason == RejectReason::TooHard);
}

TEST_CASE("bounds are inclusive") {
  SelectionConfig cfg;
  CHECK(is_medium(std::vector<double>{0.0, 0.0, 0.0, 0.4, 0.6}, cfg).retained);  // mean 0.2
  CHECK(is_medium(std::vector<double>{1.0, 1.0, 1.0, 0.6, 0.4}, cfg).retained);  // mean 0.8
  CHECK(is_medium(std::vector<double>{0.4, 0.4, 0.4, 0.8, 0.8}, cfg).retained);  // range 0.4
}

TEST_CASE("agreement with the brute-force filter on the full grid") {
  SelectionConfig cfg;
  int checked = 0;
  int kept = 0;
  std::array<int, 5> k{};
  for (int code = 0; code < 7776; ++code) {
    int c = code;
    std::vector<double> s;
    for (int& v : k) {
      v = c % 6;
      c /= 6;
      s.push_back(v * 0.2);
    }
    const bool expect = grid_keep(k);
    CHECK(is_medium(s, cfg).retained == expect);
    kept += expect;
    ++checked;
  }
  CHECK(checked == 7776);
  CHECK(kept > 0);
}

TEST_CASE("verdict ignores score order") {
  SelectionConfig cfg;
  std::vector<double> s{0.0, 0.2, 0.6, 0.8, 1.0};
  const bool base = is_medium(s, cfg).retained;
  std::sort(s.begin(), s.end());
  do {
    CHECK(is_medium(s, cfg).retained == base);
  } while (std::next_permutation(s.begin(), s.end()));
}

TEST_CASE("symmetric spread never causes a LowSpread rejection") {
  SelectionConfig cfg;
  for (double mean : {0.3, 0.5, 0.7}) {
    for (double spread = 0.2; spread <= 0.6; spread += 0.05) {
      const double h = std::min(spread / 2, std::min(mean, 1 - mean));
      const auto narrow = is_medium(std::vector<double>{mean - h / 2, mean, mean, mean, mean + h / 2}, cfg);
      const auto wide = is_medium(std::vector<double>{mean - h, mean, mean, mean, mean + h}, cfg);
      if (narrow.retained) CHECK(wide.retained);
    }
  }
}

TEST_CASE("input validation") {
  SelectionConfig cfg;
  try {
    is_medium(std::vector<double>{0.5, 0.5}, cfg);
    FAIL("accepted two scores with n_rollouts 5");
  } catch (const SelectionError& e) {
    CHECK(e.kind() == SelectionError::Kind::WrongScoreCount);
  }
  CHECK_THROWS_AS(is_medium(std::vector<double>{0.5, 0.5, 0.5, 0.5, 1.5}, cfg), SelectionError);
  auto bad = cfg;
  bad.avg_low = 0.9;
  CHECK_THROWS_AS(validate(bad), SelectionError);
  CHECK_THROWS_AS(select({}, seed_text, seed_score, cfg), SelectionError);
}

TEST_CASE("select is deterministic and independent of dataset order") {
  SelectionConfig cfg;
  cfg.seed = 5;
  const auto q = ids(300);
  const auto a = select(q, seed_text, seed_score, cfg);
  const auto b = select(q, seed_text, seed_score, cfg);
  CHECK(a.verdicts.size() == 300);
  CHECK(to_json(a.summary) == to_json(b.summary));

  auto shuffled = q;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(1));
  auto one_worker = cfg;
  one_worker.max_workers = 1;
  const auto c = select(shuffled, seed_text, seed_score, one_worker);
  REQUIRE(c.verdicts.size() == a.verdicts.size());
  for (size_t i = 0; i < a.verdicts.size(); ++i) {
    CHECK(to_json(a.verdicts[i]) == to_json(c.verdicts[i]));
  }
  const auto& s = a.summary;
  CHECK(s.retained + s.too_easy + s.too_hard + s.low_spread + s.skipped == s.total);
}

TEST_CASE("quota keeps the widest spreads, ties by id") {
  SelectionConfig cfg;
  cfg.n_rollouts = 2;
  cfg.target_count = 3;
  // Item i scores {0.2, 0.2 + spread[i]}.
  const std::vector<double> spread{0.4, 0.6, 0.4, 0.6, 0.5, 0.4};
  const auto q = ids(6);
  auto src = [](std::size_t i, int r, std::uint64_t) {
    return std::to_string(i) + ":" + std::to_string(r);
  };
  auto score = [&](std::size_t i, int r, const std::string&) { return 0.2 + r * spread[i]; };
  const auto rep = select(q, src, score, cfg);
  CHECK(rep.summary.retained == 6);
  CHECK(rep.summary.selected == 3);
  CHECK(rep.selected_ids() == std::vector<std::string>{"q1001", "q1003", "q1004"});
}

TEST_CASE("scorer failures mark items skipped") {
  SelectionConfig cfg;
  const auto q = ids(10);
  auto score = [](std::size_t i, int, const std::string& out) -> double {
    if (i == 4) throw std::runtime_error("judge down");
    return seed_score(i, 0, out);
  };
  const auto rep = select(q, seed_text, score, cfg);
  CHECK(rep.summary.skipped == 1);
  const auto& v = rep.verdicts[4];
  CHECK(v.query_id == "q1004");
  REQUIRE(v.skipped.has_value());
  CHECK(v.skipped->find("judge down") != std::string::npos);
  CHECK_FALSE(v.selected);
}

TEST_CASE("rollout seeds are distinct per query and rollout") {
  std::set<std::uint64_t> seen;
  for (const auto& id : ids(50)) {
    for (int r = 0; r < 5; ++r) seen.insert(rollout_seed(0, id, r));
  }
  CHECK(seen.size() == 250);
  CHECK(rollout_seed(1, "q", 0) != rollout_seed(2, "q", 0));
}
