#include "mscore/records.hpp"

#include <fstream>

#include <fmt/format.h>

#include "mscore/error.hpp"

namespace mscore {

namespace {

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorKind::invalid_record, fmt::format("missing key '{}'", key));
  }
  return j.at(key);
}

std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw Error(ErrorKind::invalid_record, fmt::format("'{}' must be a string", key));
  return v.get<std::string>();
}

ordered_json steps_record(const std::vector<ReasoningStep>& steps) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : steps) {
    arr.push_back(ordered_json{{"speaker", to_string(s.speaker)}, {"text", s.text}});
  }
  return arr;
}

std::vector<ReasoningStep> steps_from(const json& arr) {
  if (!arr.is_array()) throw Error(ErrorKind::invalid_record, "'steps' must be an array");
  std::vector<ReasoningStep> steps;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    steps.push_back({i, parse_speaker(require_string(arr[i], "speaker")), require_string(arr[i], "text")});
  }
  return steps;
}

}  // namespace

ordered_json to_record(const Problem& p) {
  ordered_json extra = ordered_json::array();
  for (const auto& a : p.extra_info) extra.push_back(ordered_json{{"name", a.name}, {"text", a.text}});
  ordered_json j;
  j["id"] = p.id;
  j["statement"] = p.statement;
  j["option_yes"] = p.option_yes;
  j["option_no"] = p.option_no;
  j["domain_tag"] = to_string(p.domain_tag);
  j["ground_truth"] = p.ground_truth ? ordered_json(*p.ground_truth) : ordered_json(nullptr);
  j["extra_info"] = extra;
  j["resolved_after_cutoff"] =
      p.resolved_after_cutoff ? ordered_json(*p.resolved_after_cutoff) : ordered_json(nullptr);
  return j;
}

Problem problem_from_record(const json& j) {
  Problem p;
  p.id = require_string(j, "id");
  p.statement = require_string(j, "statement");
  p.option_yes = require_string(j, "option_yes");
  p.option_no = require_string(j, "option_no");
  p.domain_tag = parse_domain_tag(require_string(j, "domain_tag"));
  if (auto it = j.find("ground_truth"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw Error(ErrorKind::invalid_record, "'ground_truth' must be 0, 1 or null");
    p.ground_truth = it->get<int>();
  }
  if (auto it = j.find("extra_info"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorKind::invalid_record, "'extra_info' must be an array");
    for (const auto& a : *it) p.extra_info.push_back({require_string(a, "name"), require_string(a, "text")});
  }
  if (auto it = j.find("resolved_after_cutoff"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw Error(ErrorKind::invalid_record, "'resolved_after_cutoff' must be boolean");
    p.resolved_after_cutoff = it->get<bool>();
  }
  p.validate();
  return p;
}

ordered_json to_record(const Setup& s) {
  return ordered_json{{"model_id", s.model_id},
                      {"prompt_condition", to_string(s.prompt_condition)},
                      {"technique", to_string(s.technique)},
                      {"domain_tag", to_string(s.domain_tag)},
                      {"judge_model_id", s.judge_model_id}};
}

Setup setup_from_record(const json& j) {
  Setup s;
  s.model_id = require_string(j, "model_id");
  s.prompt_condition = parse_prompt_condition(require_string(j, "prompt_condition"));
  s.technique = parse_technique(require_string(j, "technique"));
  s.domain_tag = parse_domain_tag(require_string(j, "domain_tag"));
  s.judge_model_id = require_string(j, "judge_model_id");
  return s;
}

ordered_json to_record(const Trajectory& t) {
  ordered_json j;
  j["problem_id"] = t.problem_id;
  j["setup"] = to_record(t.setup);
  j["setup_digest"] = t.setup.digest();
  j["transcript_kind"] = to_string(t.transcript_kind);
  j["steps"] = steps_record(t.steps);
  j["seed"] = t.seed;
  j["created_at"] = t.created_at;
  j["raw_reply"] = t.raw_reply;
  return j;
}

Trajectory trajectory_from_record(const json& j) {
  Trajectory t;
  t.problem_id = require_string(j, "problem_id");
  t.setup = setup_from_record(require(j, "setup"));
  t.transcript_kind = parse_transcript_kind(require_string(j, "transcript_kind"));
  t.steps = steps_from(require(j, "steps"));
  t.seed = require(j, "seed").get<std::uint64_t>();
  if (j.contains("created_at")) t.created_at = require_string(j, "created_at");
  if (j.contains("raw_reply")) t.raw_reply = require_string(j, "raw_reply");
  t.validate();
  return t;
}

ordered_json to_record(const BeliefTrace& t) {
  ordered_json j;
  j["problem_id"] = t.problem_id;
  j["setup_digest"] = t.setup_digest;
  j["technique"] = to_string(t.technique);
  j["judge_model_id"] = t.judge_model_id;
  j["beliefs"] = t.beliefs;
  j["steps"] = steps_record(t.steps);
  j["warnings"] = t.warnings;
  j["seed"] = t.seed;
  return j;
}

BeliefTrace trace_from_record(const json& j) {
  BeliefTrace t;
  t.problem_id = require_string(j, "problem_id");
  t.setup_digest = require_string(j, "setup_digest");
  t.technique = parse_technique(require_string(j, "technique"));
  t.judge_model_id = require_string(j, "judge_model_id");
  const auto& beliefs = require(j, "beliefs");
  if (!beliefs.is_array()) throw Error(ErrorKind::invalid_record, "'beliefs' must be an array");
  for (const auto& b : beliefs) {
    if (!b.is_number()) throw Error(ErrorKind::invalid_record, "non-numeric belief");
    t.beliefs.push_back(b.get<double>());
  }
  t.steps = steps_from(require(j, "steps"));
  if (auto it = j.find("warnings"); it != j.end()) t.warnings = it->get<std::vector<std::string>>();
  if (auto it = j.find("seed"); it != j.end()) t.seed = it->get<std::uint64_t>();
  t.validate();
  return t;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, fmt::format("cannot open {}", path.string()));
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::invalid_record, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

std::string to_line(const ordered_json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

}  // namespace mscore
