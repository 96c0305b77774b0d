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

#include "tracerl/trace_chain.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "tracerl/io.hpp"

using namespace tracerl::trace;

namespace {

const char* kCanonical =
    "<Caption>A periapical film of the lower molar region.</Caption>\n"
    "<Think>reasoning</Think>\n"
    "<Answer>caries mild</Answer>";

FormatError::Kind kind_of(std::string_view text) {
  try {
    parse_sections(text);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("expected a FormatError");
  return FormatError::Kind::MissingSection;
}

const char* kind_name(FormatError::Kind k) {
  switch (k) {
    case FormatError::Kind::MissingSection: return "MissingSection";
    case FormatError::Kind::DuplicateSection: return "DuplicateSection";
    case FormatError::Kind::OrderViolation: return "OrderViolation";
    case FormatError::Kind::EmptySection: return "EmptySection";
  }
  return "";
}

TraceChain sample_chain() {
  return {"An intraoral photograph of the lower left molars.",
          {"caries", "calculus"},
          {"K-caries: enamel demineralization shows as a crown radiolucency"},
          "The occlusal surface shows a dark cavitation.\nNo deposit is visible.",
          "caries mild"};
}

}  // namespace

TEST_CASE("canonical response parses into its three bodies") {
  const auto s = parse_sections(kCanonical);
  CHECK(s.caption == "A periapical film of the lower molar region.");
  CHECK(s.think == "reasoning");
  CHECK(s.answer == "caries mild");
  CHECK(s.raw == kCanonical);
  CHECK(format_score(kCanonical) == 1.0);
}

TEST_CASE("duplicate Answer is rejected and scores zero") {
  const std::string text = std::string(kCanonical) + "\n<Answer>abscess severe</Answer>";
  try {
    parse_sections(text);
    FAIL("accepted a duplicate section");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::DuplicateSection);
    CHECK(e.section() == "Answer");
  }
  CHECK(format_score(text) == 0.0);
}

TEST_CASE("missing Think is reported by name") {
  try {
    parse_sections("<Caption>c</Caption><Answer>a</Answer>");
    FAIL("accepted a missing section");
  } catch (const FormatError& e) {
    CHECK(e.kind() == FormatError::Kind::MissingSection);
    CHECK(e.section() == "Think");
  }
}

TEST_CASE("sections out of order") {
  CHECK(kind_of("<Answer>a</Answer><Caption>c</Caption><Think>t</Think>") ==
        FormatError::Kind::OrderViolation);
  CHECK(kind_of("<Caption>c<Think>t</Think></Caption><Answer>a</Answer>") ==
        FormatError::Kind::OrderViolation);
}

TEST_CASE("blank section body") {
  CHECK(kind_of("<Caption>c</Caption><Think> \n\t</Think><Answer>a</Answer>") ==
        FormatError::Kind::EmptySection);
}

TEST_CASE("missing outranks duplicate") {
  CHECK(kind_of("<Caption>c</Caption><Caption>c</Caption><Answer>a</Answer>") ==
        FormatError::Kind::MissingSection);
}

TEST_CASE("labeled fixture corpus") {
  const auto corpus =
      tracerl::io::read_jsonl(std::filesystem::path(TRACERL_TEST_FIXTURES) / "trace_corpus.jsonl");
  REQUIRE(corpus.size() >= 40);
  for (const auto& item : corpus) {
    const auto id = item.at("id").get<std::string>();
    const auto text = item.at("text").get<std::string>();
    const bool valid = item.at("label") == "valid";
    CAPTURE(id);
    CHECK(format_score(text) == (valid ? 1.0 : 0.0));
    if (!valid) CHECK(kind_name(kind_of(text)) == item.at("error").get<std::string>());
  }
}

TEST_CASE("format_score never throws on random bytes") {
  std::mt19937_64 gen(2026);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(0, 256);
  const std::string pieces[] = {"<Caption>", "</Caption>", "<Think>", "</Think>", "<Answer>",
                                "</Answer>"};
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const int n = len(gen);
    for (int j = 0; j < n; ++j) {
      if (byte(gen) < 16) {
        s += pieces[byte(gen) % 6];
      } else {
        s.push_back(static_cast<char>(byte(gen)));
      }
    }
    double v = -1.0;
    CHECK_NOTHROW(v = format_score(s));
    CHECK((v == 0.0 || v == 1.0));
  }
}

TEST_CASE("render then parse reproduces the bodies") {
  SectionedResponse s{"cap", "\nthink body\n", " ans ", ""};
  const auto back = parse_sections(render_sections(s));
  CHECK(back.caption == s.caption);
  CHECK(back.think == s.think);
  CHECK(back.answer == s.answer);
}

TEST_CASE("trace chain round trip") {
  const auto chain = sample_chain();
  const auto text = render_trace(chain);
  CHECK(format_score(text) == 1.0);
  CHECK(chain_from_sections(parse_sections(text)) == chain);
  CHECK(chain_from_json(to_json(chain)) == chain);
}

TEST_CASE("trace chain round trip over generated chains") {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> count(1, 4);
  std::uniform_int_distribution<int> word(0, 5);
  const char* words[] = {"crown", "root", "apex", "bone", "deposit", "margin"};
  auto phrase = [&] {
    std::string s = words[word(gen)];
    for (int i = 0, n = count(gen); i < n; ++i) s += std::string(" ") + words[word(gen)];
    return s;
  };
  for (int i = 0; i < 200; ++i) {
    TraceChain c;
    c.inspection = phrase();
    for (int j = 0, n = count(gen); j < n; ++j) c.hypotheses.push_back(phrase());
    for (int j = 0, n = count(gen); j < n; ++j) c.knowledge_refs.push_back(phrase());
    c.verification = phrase() + "\n" + phrase();
    c.conclusion = phrase();
    CHECK(chain_from_sections(parse_sections(render_trace(c))) == c);
  }
}

TEST_CASE("chain invariants") {
  auto c = sample_chain();
  c.hypotheses.clear();
  CHECK_THROWS_AS(validate(c), InvariantViolation);

  c = sample_chain();
  c.knowledge_refs.push_back("two\nlines");
  CHECK_THROWS_AS(validate(c), InvariantViolation);

  c = sample_chain();
  c.conclusion = "see </Answer>";
  CHECK_THROWS_AS(validate(c), InvariantViolation);

  c = sample_chain();
  c.inspection = "";
  CHECK_THROWS_AS(render_trace(c), InvariantViolation);
}

TEST_CASE("extract_answer ignores the rest of the response") {
  CHECK(extract_answer("junk <Answer>abscess</Answer> <Answer>x</Answer>") == "abscess");
  CHECK_FALSE(extract_answer("<Answer>open only").has_value());
}

TEST_CASE("templates") {
  TemplateRegistry reg;
  reg.add("t", "Findings: {{annotation}}. Looks like {{appearance}}.\n{{knowledge}}");
  const auto prompt =
      build_cot_prompt(reg, {"caries", "calculus"}, "dark spots", {"K-a", "K-b"}, "t");
  CHECK(prompt == "Findings: caries, calculus. Looks like dark spots.\n[1] K-a\n[2] K-b");

  try {
    build_cot_prompt(reg, {"caries"}, "x", {}, "missing");
    FAIL("unknown template accepted");
  } catch (const TemplateError& e) {
    CHECK(e.kind() == TemplateError::Kind::UnknownTemplate);
  }
  try {
    build_cot_prompt(reg, {}, "x", {}, "t");
    FAIL("empty annotation accepted");
  } catch (const TemplateError& e) {
    CHECK(e.kind() == TemplateError::Kind::EmptyAnnotation);
  }
  try {
    fill_template("{{a}} and {{b}}", {{"a", "1"}});
    FAIL("unfilled slot accepted");
  } catch (const TemplateError& e) {
    CHECK(e.kind() == TemplateError::Kind::UnfilledPlaceholder);
    CHECK(e.detail() == "b");
  }
}

TEST_CASE("shipped templates load and fill") {
  const auto reg = TemplateRegistry::load_directory(
      std::filesystem::path(TRACERL_DEFAULT_ASSET_DIR) / "templates");
  REQUIRE(reg.contains("periapical"));
  const auto p = build_cot_prompt(reg, {"apical radiolucency"}, "dark halo at the apex",
                                  {"K-abscess: periapical infection"}, "periapical");
  CHECK(p.find("{{") == std::string::npos);
  CHECK(p.find("apical radiolucency") != std::string::npos);
}
