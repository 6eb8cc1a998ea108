#include "mscore/templates.hpp"

#include <fmt/format.h>

#include "mscore/error.hpp"

namespace mscore {

namespace templates_data {
extern const std::string_view prior_conforming;
extern const std::string_view critical_thinking;
extern const std::string_view belief_initial;
extern const std::string_view info_interlude;
extern const std::string_view info_item;
extern const std::string_view info_ending;
extern const std::string_view belief_trace;
extern const std::string_view cot;
extern const std::string_view debate;
extern const std::string_view openreview_question;
}  // namespace templates_data

namespace {

constexpr Template kAll[] = {
    Template::prior_conforming, Template::critical_thinking, Template::belief_initial,
    Template::info_interlude,   Template::info_item,         Template::info_ending,
    Template::belief_trace,     Template::cot,               Template::debate,
    Template::openreview_question,
};

}  // namespace

std::string_view template_name(Template t) {
  switch (t) {
    case Template::prior_conforming: return "prior_conforming";
    case Template::critical_thinking: return "critical_thinking";
    case Template::belief_initial: return "belief_initial";
    case Template::info_interlude: return "info_interlude";
    case Template::info_item: return "info_item";
    case Template::info_ending: return "info_ending";
    case Template::belief_trace: return "belief_trace";
    case Template::cot: return "cot";
    case Template::debate: return "debate";
    case Template::openreview_question: return "openreview_question";
  }
  return "?";
}

std::string_view template_text(Template t) {
  namespace d = templates_data;
  switch (t) {
    case Template::prior_conforming: return d::prior_conforming;
    case Template::critical_thinking: return d::critical_thinking;
    case Template::belief_initial: return d::belief_initial;
    case Template::info_interlude: return d::info_interlude;
    case Template::info_item: return d::info_item;
    case Template::info_ending: return d::info_ending;
    case Template::belief_trace: return d::belief_trace;
    case Template::cot: return d::cot;
    case Template::debate: return d::debate;
    case Template::openreview_question: return d::openreview_question;
  }
  return {};
}

std::map<std::string, std::string> template_digests() {
  std::map<std::string, std::string> out;
  for (Template t : kAll) out.emplace(template_name(t), sha256_hex(template_text(t)));
  return out;
}

std::string_view system_prompt(PromptCondition condition) {
  switch (condition) {
    case PromptCondition::none: return {};
    case PromptCondition::critical_thinking: return template_text(Template::critical_thinking);
    case PromptCondition::prior_conforming: return template_text(Template::prior_conforming);
  }
  return {};
}

std::string format_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out += '{';
        ++i;
        continue;
      }
      const auto close = tmpl.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw Error(ErrorKind::invalid_config, fmt::format("unterminated field at offset {}", i));
      }
      const std::string name(tmpl.substr(i + 1, close - i - 1));
      auto it = values.find(name);
      if (it == values.end()) {
        throw Error(ErrorKind::invalid_config, fmt::format("no value for template field '{}'", name));
      }
      out += it->second;
      i = close;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
        out += '}';
        ++i;
        continue;
      }
      throw Error(ErrorKind::invalid_config, fmt::format("single '}}' at offset {}", i));
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace mscore
