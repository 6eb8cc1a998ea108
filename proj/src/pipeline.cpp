#include "mscore/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <regex>
#include <tuple>

#include <fmt/format.h>

#include "mscore/records.hpp"
#include "mscore/templates.hpp"

namespace mscore::pipeline {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Lines of the text with CRLF and lone CR both treated as line breaks.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n' || text[i] == '\r') {
      lines.push_back(text.substr(start, i - start));
      if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      start = i + 1;
    }
  }
  lines.push_back(text.substr(start));
  return lines;
}

std::vector<std::string> paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.emplace_back(t);
    current.clear();
  };
  for (auto line : lines_of(text)) {
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (!current.empty()) current += '\n';
    current += line;
  }
  flush();
  return out;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string now(const GenerationOptions& options) { return options.clock ? options.clock() : utc_timestamp(); }

llm::ChatRequest reasoner_request(const Setup& setup, const GenerationOptions& options) {
  llm::ChatRequest req;
  req.model_id = setup.model_id;
  req.temperature = options.temperature.value_or(llm::default_temperature(llm::CallRole::reasoner, setup.model_id));
  req.max_tokens = options.max_tokens;
  if (auto sys = system_prompt(setup.prompt_condition); !sys.empty()) {
    req.messages.push_back({llm::Role::system, std::string(sys)});
  }
  return req;
}

std::string debate_prompt(const Problem& problem, const std::string& statement, bool pro) {
  return format_template(template_text(Template::debate),
                         {{"problem_statement", statement},
                          {"option_yes", pro ? problem.option_yes : problem.option_no},
                          {"option_no", pro ? problem.option_no : problem.option_yes}});
}

struct BeliefToken {
  std::string text;
  bool quoted = false;
};

std::vector<BeliefToken> belief_tokens(std::string_view reply) {
  static const std::regex key(R"re(["']belief["']\s*:\s*)re");
  std::vector<BeliefToken> out;
  const std::string s(reply);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), key); it != std::sregex_iterator(); ++it) {
    std::size_t pos = static_cast<std::size_t>(it->position() + it->length());
    BeliefToken tok;
    if (pos < s.size() && (s[pos] == '"' || s[pos] == '\'')) {
      const char q = s[pos];
      const auto end = s.find(q, pos + 1);
      tok.quoted = true;
      tok.text = s.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
    } else {
      std::size_t end = pos;
      while (end < s.size() && (std::isalnum(static_cast<unsigned char>(s[end])) || s[end] == '.' ||
                                s[end] == '-' || s[end] == '+')) {
        ++end;
      }
      tok.text = s.substr(pos, end - pos);
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::optional<double> to_number(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// Extracts and clamps belief values; throws judge_format_error.
std::vector<double> extract_beliefs(std::string_view reply, std::size_t expected,
                                    std::vector<std::string>& warnings) {
  const auto tokens = belief_tokens(reply);
  if (tokens.size() != expected) {
    throw Error(ErrorKind::judge_format_error,
                fmt::format("expected {} beliefs, found {}", expected, tokens.size()));
  }
  std::vector<double> values;
  values.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto v = to_number(tokens[i].text);
    if (!v) {
      throw Error(ErrorKind::judge_format_error,
                  fmt::format("belief {} is not numeric: '{}'", i, tokens[i].text));
    }
    const double clamped = std::clamp(*v, 0.0, 1.0);
    if (clamped != *v) warnings.push_back(fmt::format("belief {} clamped from {} to {}", i, *v, clamped));
    values.push_back(clamped);
  }
  return values;
}

llm::ChatRequest judge_request(const std::string& model, const JudgeOptions& options, std::string prompt) {
  llm::ChatRequest req;
  req.model_id = model;
  req.temperature = options.temperature.value_or(llm::default_temperature(llm::CallRole::judge, model));
  req.max_tokens = options.max_tokens;
  req.messages.push_back({llm::Role::user, std::move(prompt)});
  return req;
}

}  // namespace

std::vector<std::string> split_steps(std::string_view text) {
  auto steps = paragraphs(text);
  if (steps.size() > kMaxSteps) {
    std::span<const std::string> tail(steps.begin() + kMaxSteps - 1, steps.end());
    std::string merged = join(tail, "\n");
    steps.resize(kMaxSteps);
    steps.back() = std::move(merged);
  }
  return steps;
}

std::string reasoner_statement(const Problem& problem) {
  std::string out = problem.statement;
  for (const auto& item : problem.extra_info) {
    out += format_template(template_text(Template::info_item),
                           {{"extra_info_name", item.name}, {"extra_info", item.text}});
  }
  return out;
}

Trajectory run_cot(const Problem& problem, const Setup& setup, llm::ChatClient& backend,
                   const GenerationOptions& options) {
  if (setup.technique != Technique::cot) {
    throw Error(ErrorKind::invalid_config, "run_cot requires a cot setup");
  }
  auto req = reasoner_request(setup, options);
  req.messages.push_back(
      {llm::Role::user, format_template(template_text(Template::cot), {{"problem_statement", reasoner_statement(problem)}})});
  auto reply = backend.complete(req);

  Trajectory t;
  t.problem_id = problem.id;
  t.setup = setup;
  t.transcript_kind = TranscriptKind::cot_steps;
  t.seed = options.seed;
  t.raw_reply = reply.text;
  auto steps = split_steps(reply.text);
  if (steps.empty()) throw Error(ErrorKind::no_reasoning_produced, problem.id);
  for (std::size_t i = 0; i < steps.size(); ++i) t.steps.push_back({i, Speaker::reasoner, std::move(steps[i])});
  t.created_at = now(options);
  return t;
}

DebateError::DebateError(ErrorKind kind, std::size_t turn, Trajectory partial, std::string_view detail)
    : Error(kind, fmt::format("turn {}: {}", turn, detail)), turn_(turn), partial_(std::move(partial)) {}

Trajectory run_debate(const Problem& problem, const Setup& setup, llm::ChatClient& backend,
                      const GenerationOptions& options) {
  if (setup.technique != Technique::debate) {
    throw Error(ErrorKind::invalid_config, "run_debate requires a debate setup");
  }
  if (options.debate_rounds < 1) throw Error(ErrorKind::invalid_config, "debate rounds must be >= 1");

  Trajectory t;
  t.problem_id = problem.id;
  t.setup = setup;
  t.transcript_kind = TranscriptKind::debate_turns;
  t.seed = options.seed;

  const auto statement = reasoner_statement(problem);
  auto pro = reasoner_request(setup, options);
  auto con = reasoner_request(setup, options);
  pro.messages.push_back({llm::Role::user, debate_prompt(problem, statement, true)});
  const auto con_opening = debate_prompt(problem, statement, false);

  const std::size_t turns = options.debate_rounds * 2;
  for (std::size_t k = 0; k < turns; ++k) {
    const bool pro_turn = k % 2 == 0;
    auto& thread = pro_turn ? pro : con;
    const std::size_t turn = k + 1;
    llm::ChatResponse reply;
    try {
      reply = backend.complete(thread);
    } catch (const Error& e) {
      t.created_at = now(options);
      throw DebateError(e.kind(), turn, std::move(t), e.what());
    }
    auto parts = paragraphs(reply.text);
    if (parts.empty()) {
      t.created_at = now(options);
      throw DebateError(ErrorKind::silent_debater, turn, std::move(t),
                        fmt::format("{} produced an empty speech", pro_turn ? "pro" : "con"));
    }
    auto speech = join(parts, "\n");
    thread.messages.push_back({llm::Role::assistant, speech});
    auto& other = pro_turn ? con : pro;
    if (k == 0) {
      other.messages.push_back({llm::Role::user, con_opening + "\n\n" + speech});
    } else {
      other.messages.push_back({llm::Role::user, speech});
    }
    t.steps.push_back({k, pro_turn ? Speaker::pro : Speaker::con, std::move(speech)});
  }
  t.created_at = now(options);
  return t;
}

std::string_view name_steps(TranscriptKind kind) {
  return kind == TranscriptKind::debate_turns ? "debate turns" : "reasoning steps";
}

std::string serialize_steps(std::span<const ReasoningStep> steps, TranscriptKind kind) {
  auto list = ordered_json::array();
  list.push_back({{"step", ""}, {"belief", nullptr}});
  for (const auto& s : steps) {
    ordered_json item;
    if (kind == TranscriptKind::debate_turns) item["speaker"] = to_string(s.speaker);
    item["step"] = s.text;
    item["belief"] = nullptr;
    list.push_back(std::move(item));
  }
  return list.dump(2, ' ', false, ordered_json::error_handler_t::replace);
}

std::string build_trace_prompt(const Problem& problem, std::span<const ReasoningStep> steps, TranscriptKind kind) {
  if (steps.empty()) throw Error(ErrorKind::invalid_record, "cannot build a trace prompt without steps");
  return format_template(template_text(Template::belief_trace),
                         {{"option_yes", problem.option_yes},
                          {"option_no", problem.option_no},
                          {"problem_statement", reasoner_statement(problem)},
                          {"name_steps", std::string(name_steps(kind))},
                          {"reasoning_steps", serialize_steps(steps, kind)},
                          {"num_steps", std::to_string(steps.size() + 1)}});
}

JudgeFill parse_trace_reply(std::string_view reply, std::size_t expected_count) {
  if (expected_count < 2) throw Error(ErrorKind::invalid_config, "expected_count must be >= 2");
  JudgeFill fill;
  fill.raw_reply = std::string(reply);
  fill.beliefs = extract_beliefs(reply, expected_count, fill.warnings);
  return fill;
}

JudgeOutcome judge_trajectory(const Problem& problem, const Trajectory& trajectory, llm::ChatClient& judge,
                              const JudgeOptions& options) {
  JudgeOutcome out;
  out.judge_model_id = options.judge_model_id.empty() ? trajectory.setup.judge_model_id : options.judge_model_id;
  const auto req = judge_request(out.judge_model_id, options,
                                 build_trace_prompt(problem, trajectory.steps, trajectory.transcript_kind));
  const std::size_t expected = trajectory.steps.size() + 1;

  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    ++out.attempts;
    auto reply = judge.complete(req, static_cast<unsigned>(attempt));
    try {
      out.fill = parse_trace_reply(reply.text, expected);
      out.fill.retries_used = attempt;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::judge_format_error) throw;
      out.fill = {reply.text, {}, attempt, {}};
      out.errors.push_back(e.what());
      continue;
    }
    BeliefTrace trace;
    trace.problem_id = trajectory.problem_id;
    trace.setup_digest = trajectory.setup.digest();
    trace.technique = trajectory.setup.technique;
    trace.judge_model_id = out.judge_model_id;
    trace.beliefs = out.fill.beliefs;
    trace.steps = trajectory.steps;
    trace.warnings = out.fill.warnings;
    trace.seed = trajectory.seed;
    trace.validate();
    out.trace = std::move(trace);
    return out;
  }
  return out;
}

std::string build_initial_prompt(const Problem& problem, std::span<const Attachment> extra_info) {
  const std::map<std::string, std::string> options{{"option_yes", problem.option_yes},
                                                   {"option_no", problem.option_no}};
  auto values = options;
  values["problem_statement"] = problem.statement;
  std::string prompt = format_template(template_text(Template::belief_initial), values);
  if (extra_info.empty()) return prompt;
  prompt += template_text(Template::info_interlude);
  for (const auto& item : extra_info) {
    prompt += format_template(template_text(Template::info_item),
                              {{"extra_info_name", item.name}, {"extra_info", item.text}});
  }
  prompt += format_template(template_text(Template::info_ending), options);
  return prompt;
}

double elicit_initial_belief(const Problem& problem, llm::ChatClient& judge, std::span<const Attachment> extra_info,
                             const JudgeOptions& options) {
  const auto model = options.judge_model_id;
  if (model.empty()) throw Error(ErrorKind::invalid_config, "judge model id is required");
  const auto req = judge_request(model, options, build_initial_prompt(problem, extra_info));
  std::string last_error;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    auto reply = judge.complete(req, static_cast<unsigned>(attempt));
    try {
      std::vector<std::string> warnings;
      return extract_beliefs(reply.text, 1, warnings).front();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::judge_format_error) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorKind::unjudgeable_problem,
              fmt::format("{} after {} attempts: {}", problem.id, options.max_retries + 1, last_error));
}

PairedBeliefs judge_pairing(std::span<const BeliefTrace> traces_a, std::span<const BeliefTrace> traces_b) {
  using Key = std::tuple<std::string, std::string, std::size_t>;
  auto index = [](std::span<const BeliefTrace> traces, std::string_view side) {
    std::map<Key, double> out;
    std::map<std::pair<std::string, std::string>, bool> seen;
    for (const auto& t : traces) {
      if (!seen.emplace(std::pair{t.problem_id, t.setup_digest}, true).second) {
        throw Error(ErrorKind::invalid_record,
                    fmt::format("judge {}: duplicate trace for {} / {}", side, t.problem_id, t.setup_digest));
      }
      for (std::size_t i = 0; i < t.beliefs.size(); ++i) out.emplace(Key{t.problem_id, t.setup_digest, i}, t.beliefs[i]);
    }
    return out;
  };
  const auto a = index(traces_a, "a");
  const auto b = index(traces_b, "b");
  PairedBeliefs out;
  for (const auto& [key, value] : a) {
    auto it = b.find(key);
    if (it == b.end()) {
      ++out.unmatched_a;
      continue;
    }
    out.a.push_back(value);
    out.b.push_back(it->second);
  }
  out.unmatched_b = b.size() - out.a.size();
  if (out.a.empty()) throw Error(ErrorKind::no_overlap, "the two judge runs share no (problem, setup, step) keys");
  return out;
}

}  // namespace mscore::pipeline
