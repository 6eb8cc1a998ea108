#pragma once

// Prompt templates shipped under resources/prompts/<version>/ and compiled
// into the library, plus a formatter with Python str.format semantics.

#include <map>
#include <string>
#include <string_view>

#include "mscore/core.hpp"

namespace mscore {

enum class Template {
  prior_conforming,
  critical_thinking,
  belief_initial,
  info_interlude,
  info_item,
  info_ending,
  belief_trace,
  cot,
  debate,
  openreview_question,
};

inline constexpr std::string_view kTemplateVersion = "v1";

std::string_view template_name(Template t);
std::string_view template_text(Template t);

/// name -> hex SHA-256 of the embedded text, for run manifests.
std::map<std::string, std::string> template_digests();

/// System prompt for a condition; empty for PromptCondition::none.
std::string_view system_prompt(PromptCondition condition);

/// Replaces {name} fields with values and collapses "{{"/"}}" to braces.
/// Substituted values are not rescanned. A field missing from `values`, or an
/// unbalanced brace, throws Error(invalid_config).
std::string format_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

}  // namespace mscore
