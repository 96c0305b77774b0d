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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tracerl/error.hpp"

namespace tracerl::trace {

/// The five-step reasoning record: inspection, hypotheses, knowledge,
/// verification, conclusion.
struct TraceChain {
  std::string inspection;
  std::vector<std::string> hypotheses;
  std::vector<std::string> knowledge_refs;
  std::string verification;
  std::string conclusion;

  bool operator==(const TraceChain&) const = default;
};

/// Bodies of the three canonical sections of a model response.
struct SectionedResponse {
  std::string caption;
  std::string think;
  std::string answer;
  std::string raw;
};

enum class Section { Caption, Think, Answer };

std::string_view section_name(Section s);

class FormatError : public Error {
 public:
  enum class Kind { MissingSection, DuplicateSection, OrderViolation, EmptySection };

  FormatError(Kind kind, std::string section);

  Kind kind() const { return kind_; }
  // Empty for OrderViolation.
  const std::string& section() const { return section_; }

 private:
  Kind kind_;
  std::string section_;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Strict parse. Each of <Caption>, <Think>, <Answer> must open and close
/// exactly once, in that order, with a body that is not blank. Text outside
/// the sections is ignored. Tags are case-sensitive.
SectionedResponse parse_sections(std::string_view text);

/// 1.0 iff parse_sections accepts the text, else 0.0. Never throws.
double format_score(std::string_view text) noexcept;

/// Emits the three sections back-to-back with the stored bodies verbatim.
std::string render_sections(const SectionedResponse& sections);

/// Throws InvariantViolation when a step is empty, a list item spans lines,
/// or any field contains a canonical tag.
void validate(const TraceChain& chain);

std::string render_trace(const TraceChain& chain);

/// Rebuilds the chain from a parsed response whose Think body uses the
/// labeled sub-blocks emitted by render_trace. Throws InvariantViolation
/// when a sub-block is missing or empty.
TraceChain chain_from_sections(const SectionedResponse& sections);

/// Returns the first complete <Answer>...</Answer> body, if any, without
/// requiring the rest of the response to be well formed.
std::optional<std::string> extract_answer(std::string_view text);

nlohmann::json to_json(const TraceChain& chain);
TraceChain chain_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Generation prompt templates

class TemplateError : public Error {
 public:
  enum class Kind { UnknownTemplate, UnfilledPlaceholder, EmptyAnnotation };
  TemplateError(Kind kind, std::string detail);
  Kind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }

 private:
  Kind kind_;
  std::string detail_;
};

/// Text templates with `{{name}}` slots, keyed by file stem.
class TemplateRegistry {
 public:
  TemplateRegistry() = default;

  /// Loads every `*.txt` file in `dir`; the id is the file stem.
  static TemplateRegistry load_directory(const std::filesystem::path& dir);

  void add(std::string id, std::string text);
  bool contains(std::string_view id) const;
  const std::string& get(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

/// Replaces `{{key}}` slots. Throws UnfilledPlaceholder naming the first slot
/// left without a value.
std::string fill_template(std::string_view text,
                          const std::map<std::string, std::string>& values);

/// Fills the slots {{annotation}}, {{appearance}} and {{knowledge}}.
std::string build_cot_prompt(const TemplateRegistry& registry,
                             const std::vector<std::string>& annotation,
                             std::string_view appearance,
                             const std::vector<std::string>& knowledge,
                             std::string_view template_id);

}  // namespace tracerl::trace
