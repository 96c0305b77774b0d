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

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace tracerl::trace {
namespace {

constexpr std::array<Section, 3> kSections = {Section::Caption, Section::Think,
                                              Section::Answer};

constexpr std::string_view kHypothesesHeader = "Hypotheses:";
constexpr std::string_view kKnowledgeHeader = "Knowledge:";
constexpr std::string_view kVerificationHeader = "Verification:";

std::string open_tag(Section s) { return "<" + std::string(section_name(s)) + ">"; }
std::string close_tag(Section s) { return "</" + std::string(section_name(s)) + ">"; }

std::vector<size_t> find_all(std::string_view text, std::string_view needle) {
  std::vector<size_t> hits;
  for (size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + 1)) {
    hits.push_back(pos);
  }
  return hits;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool has_outer_whitespace(std::string_view s) {
  return !s.empty() && (std::isspace(static_cast<unsigned char>(s.front())) ||
                        std::isspace(static_cast<unsigned char>(s.back())));
}

bool contains_tag(std::string_view s) {
  for (Section sec : kSections) {
    if (s.find(open_tag(sec)) != std::string_view::npos ||
        s.find(close_tag(sec)) != std::string_view::npos) {
      return true;
    }
  }
  return false;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    lines.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

bool is_header(std::string_view line) {
  auto t = trim(line);
  return t == kHypothesesHeader || t == kKnowledgeHeader || t == kVerificationHeader;
}

// Accepts "3. item", "- item" and "* item".
std::optional<std::string> list_item(std::string_view line) {
  auto t = trim(line);
  if (t.empty()) return std::nullopt;
  if (t.front() == '-' || t.front() == '*') {
    return std::string(trim(t.substr(1)));
  }
  size_t digits = 0;
  while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
  if (digits > 0 && digits < t.size() && (t[digits] == '.' || t[digits] == ')')) {
    return std::string(trim(t.substr(digits + 1)));
  }
  return std::nullopt;
}

void check_text_field(std::string_view name, std::string_view value, bool single_line) {
  if (is_blank(value)) throw InvariantViolation(std::string(name) + " is empty");
  if (has_outer_whitespace(value)) {
    throw InvariantViolation(std::string(name) + " has leading or trailing whitespace");
  }
  if (contains_tag(value)) throw InvariantViolation(std::string(name) + " contains a section tag");
  if (single_line && value.find('\n') != std::string_view::npos) {
    throw InvariantViolation(std::string(name) + " spans multiple lines");
  }
  if (!single_line) {
    for (auto line : split_lines(value)) {
      if (is_header(line)) {
        throw InvariantViolation(std::string(name) + " contains a sub-block header line");
      }
    }
  }
}

}  // namespace

std::string_view section_name(Section s) {
  switch (s) {
    case Section::Caption: return "Caption";
    case Section::Think: return "Think";
    case Section::Answer: return "Answer";
  }
  return "";
}

FormatError::FormatError(Kind kind, std::string section)
    : Error([&] {
        switch (kind) {
          case Kind::MissingSection: return "missing section " + section;
          case Kind::DuplicateSection: return "duplicate section " + section;
          case Kind::OrderViolation: return std::string("sections out of order");
          case Kind::EmptySection: return "empty section " + section;
        }
        return std::string("format error");
      }()),
      kind_(kind),
      section_(std::move(section)) {}

SectionedResponse parse_sections(std::string_view text) {
  struct Span {
    size_t open;
    size_t close;
  };
  std::array<std::vector<size_t>, 3> opens;
  std::array<std::vector<size_t>, 3> closes;
  for (size_t i = 0; i < kSections.size(); ++i) {
    opens[i] = find_all(text, open_tag(kSections[i]));
    closes[i] = find_all(text, close_tag(kSections[i]));
  }
  for (size_t i = 0; i < kSections.size(); ++i) {
    if (opens[i].empty() || closes[i].empty()) {
      throw FormatError(FormatError::Kind::MissingSection, std::string(section_name(kSections[i])));
    }
  }
  for (size_t i = 0; i < kSections.size(); ++i) {
    if (opens[i].size() > 1 || closes[i].size() > 1) {
      throw FormatError(FormatError::Kind::DuplicateSection,
                        std::string(section_name(kSections[i])));
    }
  }
  std::array<Span, 3> spans{};
  for (size_t i = 0; i < kSections.size(); ++i) spans[i] = {opens[i][0], closes[i][0]};
  size_t cursor = 0;
  for (size_t i = 0; i < kSections.size(); ++i) {
    if (spans[i].open < cursor || spans[i].close < spans[i].open + open_tag(kSections[i]).size()) {
      throw FormatError(FormatError::Kind::OrderViolation, "");
    }
    cursor = spans[i].close + close_tag(kSections[i]).size();
  }
  std::array<std::string, 3> bodies;
  for (size_t i = 0; i < kSections.size(); ++i) {
    size_t begin = spans[i].open + open_tag(kSections[i]).size();
    bodies[i] = std::string(text.substr(begin, spans[i].close - begin));
  }
  for (size_t i = 0; i < kSections.size(); ++i) {
    if (is_blank(bodies[i])) {
      throw FormatError(FormatError::Kind::EmptySection, std::string(section_name(kSections[i])));
    }
  }
  return {std::move(bodies[0]), std::move(bodies[1]), std::move(bodies[2]), std::string(text)};
}

double format_score(std::string_view text) noexcept {
  try {
    parse_sections(text);
    return 1.0;
  } catch (...) {
    return 0.0;
  }
}

std::string render_sections(const SectionedResponse& s) {
  std::string out;
  out += "<Caption>" + s.caption + "</Caption>\n";
  out += "<Think>" + s.think + "</Think>\n";
  out += "<Answer>" + s.answer + "</Answer>";
  return out;
}

void validate(const TraceChain& chain) {
  check_text_field("inspection", chain.inspection, false);
  if (chain.hypotheses.empty()) throw InvariantViolation("hypotheses is empty");
  if (chain.knowledge_refs.empty()) throw InvariantViolation("knowledge_refs is empty");
  for (const auto& h : chain.hypotheses) check_text_field("hypothesis", h, true);
  for (const auto& k : chain.knowledge_refs) check_text_field("knowledge_ref", k, true);
  check_text_field("verification", chain.verification, false);
  check_text_field("conclusion", chain.conclusion, false);
}

std::string render_trace(const TraceChain& chain) {
  validate(chain);
  std::ostringstream think;
  think << '\n' << kHypothesesHeader << '\n';
  for (size_t i = 0; i < chain.hypotheses.size(); ++i) {
    think << (i + 1) << ". " << chain.hypotheses[i] << '\n';
  }
  think << kKnowledgeHeader << '\n';
  for (size_t i = 0; i < chain.knowledge_refs.size(); ++i) {
    think << (i + 1) << ". " << chain.knowledge_refs[i] << '\n';
  }
  think << kVerificationHeader << '\n' << chain.verification << '\n';
  return render_sections({chain.inspection, think.str(), chain.conclusion, ""});
}

TraceChain chain_from_sections(const SectionedResponse& sections) {
  enum class Block { None, Hypotheses, Knowledge, Verification };
  TraceChain chain;
  chain.inspection = std::string(trim(sections.caption));
  chain.conclusion = std::string(trim(sections.answer));

  Block block = Block::None;
  bool saw_verification = false;
  std::vector<std::string_view> verification_lines;
  for (auto line : split_lines(sections.think)) {
    auto t = trim(line);
    if (t == kHypothesesHeader) {
      block = Block::Hypotheses;
      continue;
    }
    if (t == kKnowledgeHeader) {
      block = Block::Knowledge;
      continue;
    }
    if (t == kVerificationHeader) {
      block = Block::Verification;
      saw_verification = true;
      continue;
    }
    switch (block) {
      case Block::None:
        break;
      case Block::Hypotheses:
      case Block::Knowledge: {
        auto item = list_item(line);
        if (item && !item->empty()) {
          (block == Block::Hypotheses ? chain.hypotheses : chain.knowledge_refs)
              .push_back(std::move(*item));
        }
        break;
      }
      case Block::Verification:
        verification_lines.push_back(line);
        break;
    }
  }
  if (chain.hypotheses.empty()) throw InvariantViolation("Think has no hypotheses");
  if (chain.knowledge_refs.empty()) throw InvariantViolation("Think has no knowledge references");
  if (!saw_verification) throw InvariantViolation("Think has no verification");
  std::string verification;
  for (size_t i = 0; i < verification_lines.size(); ++i) {
    if (i > 0) verification += '\n';
    verification += verification_lines[i];
  }
  chain.verification = std::string(trim(verification));
  if (chain.inspection.empty() || chain.verification.empty() || chain.conclusion.empty()) {
    throw InvariantViolation("trace step is empty");
  }
  return chain;
}

std::optional<std::string> extract_answer(std::string_view text) {
  const std::string open = open_tag(Section::Answer);
  const std::string close = close_tag(Section::Answer);
  size_t begin = text.find(open);
  if (begin == std::string_view::npos) return std::nullopt;
  begin += open.size();
  size_t end = text.find(close, begin);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(begin, end - begin));
}

nlohmann::json to_json(const TraceChain& chain) {
  return {{"inspection", chain.inspection},
          {"hypotheses", chain.hypotheses},
          {"knowledge_refs", chain.knowledge_refs},
          {"verification", chain.verification},
          {"conclusion", chain.conclusion}};
}

TraceChain chain_from_json(const nlohmann::json& j) {
  TraceChain chain;
  chain.inspection = j.at("inspection").get<std::string>();
  chain.hypotheses = j.at("hypotheses").get<std::vector<std::string>>();
  chain.knowledge_refs = j.at("knowledge_refs").get<std::vector<std::string>>();
  chain.verification = j.at("verification").get<std::string>();
  chain.conclusion = j.at("conclusion").get<std::string>();
  return chain;
}

// ---------------------------------------------------------------------------

TemplateError::TemplateError(Kind kind, std::string detail)
    : Error([&] {
        switch (kind) {
          case Kind::UnknownTemplate: return "unknown template " + detail;
          case Kind::UnfilledPlaceholder: return "unfilled placeholder " + detail;
          case Kind::EmptyAnnotation: return std::string("annotation is empty");
        }
        return std::string("template error");
      }()),
      kind_(kind),
      detail_(std::move(detail)) {}

TemplateRegistry TemplateRegistry::load_directory(const std::filesystem::path& dir) {
  TemplateRegistry registry;
  if (!std::filesystem::is_directory(dir)) return registry;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    registry.add(entry.path().stem().string(), buf.str());
  }
  return registry;
}

void TemplateRegistry::add(std::string id, std::string text) {
  templates_.insert_or_assign(std::move(id), std::move(text));
}

bool TemplateRegistry::contains(std::string_view id) const {
  return templates_.find(id) != templates_.end();
}

const std::string& TemplateRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) {
    throw TemplateError(TemplateError::Kind::UnknownTemplate, std::string(id));
  }
  return it->second;
}

std::vector<std::string> TemplateRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

std::string fill_template(std::string_view text,
                          const std::map<std::string, std::string>& values) {
  std::string out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    size_t close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    std::string name(trim(text.substr(open + 2, close - open - 2)));
    auto it = values.find(name);
    if (it == values.end()) {
      throw TemplateError(TemplateError::Kind::UnfilledPlaceholder, name);
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::string build_cot_prompt(const TemplateRegistry& registry,
                             const std::vector<std::string>& annotation,
                             std::string_view appearance,
                             const std::vector<std::string>& knowledge,
                             std::string_view template_id) {
  const std::string& text = registry.get(template_id);
  if (annotation.empty() ||
      std::all_of(annotation.begin(), annotation.end(), [](const auto& a) { return is_blank(a); })) {
    throw TemplateError(TemplateError::Kind::EmptyAnnotation, "");
  }
  std::string labels;
  for (size_t i = 0; i < annotation.size(); ++i) {
    if (i > 0) labels += ", ";
    labels += annotation[i];
  }
  std::string snippets;
  for (size_t i = 0; i < knowledge.size(); ++i) {
    snippets += "[" + std::to_string(i + 1) + "] " + knowledge[i];
    if (i + 1 < knowledge.size()) snippets += '\n';
  }
  return fill_template(text, {{"annotation", labels},
                              {"appearance", std::string(appearance)},
                              {"knowledge", snippets}});
}

}  // namespace tracerl::trace
