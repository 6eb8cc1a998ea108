#include "mscore/core.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

#include <fmt/format.h>

#include "mscore/error.hpp"

namespace mscore {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, std::string_view what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::invalid_record, fmt::format("unknown {} '{}'", what, s));
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool has_blank_line(std::string_view text) {
  // A line consisting solely of whitespace between two content lines.
  std::size_t pos = 0;
  while ((pos = text.find('\n', pos)) != std::string_view::npos) {
    std::size_t next = text.find('\n', pos + 1);
    if (next == std::string_view::npos) break;
    auto line = text.substr(pos + 1, next - pos - 1);
    bool blank = true;
    for (char c : line) blank = blank && is_space(c);
    if (blank) return true;
    pos = next;
  }
  return false;
}

void check_probability(double b, std::string_view where) {
  if (!(b >= 0.0 && b <= 1.0)) {
    throw Error(ErrorKind::invalid_record, fmt::format("{}: belief {} outside [0,1]", where, b));
  }
}

void validate_steps(const std::vector<ReasoningStep>& steps, std::string_view where) {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (s.index != i) {
      throw Error(ErrorKind::invalid_record, fmt::format("{}: step {} has index {}", where, i, s.index));
    }
    if (s.text.empty() || is_space(s.text.front()) || is_space(s.text.back())) {
      throw Error(ErrorKind::invalid_record, fmt::format("{}: step {} is empty or untrimmed", where, i));
    }
    if (has_blank_line(s.text)) {
      throw Error(ErrorKind::invalid_record, fmt::format("{}: step {} contains a blank line", where, i));
    }
  }
}

}  // namespace

std::string_view to_string(DomainTag v) {
  switch (v) {
    case DomainTag::forecasting: return "forecasting";
    case DomainTag::changemyview: return "changemyview";
    case DomainTag::openreview: return "openreview";
    case DomainTag::synthetic: return "synthetic";
  }
  return "?";
}

std::string_view to_string(PromptCondition v) {
  switch (v) {
    case PromptCondition::none: return "none";
    case PromptCondition::critical_thinking: return "critical_thinking";
    case PromptCondition::prior_conforming: return "prior_conforming";
  }
  return "?";
}

std::string_view to_string(Technique v) {
  switch (v) {
    case Technique::cot: return "cot";
    case Technique::debate: return "debate";
  }
  return "?";
}

std::string_view to_string(Speaker v) {
  switch (v) {
    case Speaker::reasoner: return "reasoner";
    case Speaker::pro: return "pro";
    case Speaker::con: return "con";
  }
  return "?";
}

std::string_view to_string(TranscriptKind v) {
  switch (v) {
    case TranscriptKind::cot_steps: return "cot_steps";
    case TranscriptKind::debate_turns: return "debate_turns";
  }
  return "?";
}

std::string_view to_string(PairingMode v) {
  switch (v) {
    case PairingMode::per_step: return "per_step";
    case PairingMode::endpoint: return "endpoint";
  }
  return "?";
}

DomainTag parse_domain_tag(std::string_view s) {
  return parse_enum(s,
                    std::array{DomainTag::forecasting, DomainTag::changemyview,
                               DomainTag::openreview, DomainTag::synthetic},
                    "domain_tag");
}

PromptCondition parse_prompt_condition(std::string_view s) {
  return parse_enum(s,
                    std::array{PromptCondition::none, PromptCondition::critical_thinking,
                               PromptCondition::prior_conforming},
                    "prompt_condition");
}

Technique parse_technique(std::string_view s) {
  return parse_enum(s, std::array{Technique::cot, Technique::debate}, "technique");
}

Speaker parse_speaker(std::string_view s) {
  return parse_enum(s, std::array{Speaker::reasoner, Speaker::pro, Speaker::con}, "speaker");
}

TranscriptKind parse_transcript_kind(std::string_view s) {
  return parse_enum(s, std::array{TranscriptKind::cot_steps, TranscriptKind::debate_turns},
                    "transcript_kind");
}

PairingMode parse_pairing_mode(std::string_view s) {
  if (s == "per-step") return PairingMode::per_step;
  return parse_enum(s, std::array{PairingMode::per_step, PairingMode::endpoint}, "pairing mode");
}

void Problem::validate() const {
  if (id.empty()) throw Error(ErrorKind::invalid_record, "problem id is empty");
  if (option_yes.empty() || option_no.empty()) {
    throw Error(ErrorKind::invalid_record, fmt::format("problem {}: empty option label", id));
  }
  if (option_yes == option_no) {
    throw Error(ErrorKind::invalid_record, fmt::format("problem {}: option labels coincide", id));
  }
  if (ground_truth && *ground_truth != 0 && *ground_truth != 1) {
    throw Error(ErrorKind::invalid_record, fmt::format("problem {}: ground truth must be 0 or 1", id));
  }
}

std::string Setup::digest() const {
  auto canonical = fmt::format("setup/v1|{}|{}|{}|{}|{}", model_id, to_string(prompt_condition),
                               to_string(technique), to_string(domain_tag), judge_model_id);
  return sha256_hex(canonical).substr(0, 16);
}

void Trajectory::validate() const {
  if (steps.empty()) {
    throw Error(ErrorKind::invalid_record, fmt::format("trajectory {}: no steps", problem_id));
  }
  validate_steps(steps, problem_id);
  if (transcript_kind == TranscriptKind::debate_turns) {
    for (const auto& s : steps) {
      Speaker expected = s.index % 2 == 0 ? Speaker::pro : Speaker::con;
      if (s.speaker != expected) {
        throw Error(ErrorKind::invalid_record,
                    fmt::format("trajectory {}: debate turn {} out of pro/con order", problem_id, s.index));
      }
    }
  }
}

void BeliefTrace::validate() const {
  if (beliefs.size() != steps.size() + 1) {
    throw Error(ErrorKind::invalid_record,
                fmt::format("trace {}: {} beliefs for {} steps", problem_id, beliefs.size(), steps.size()));
  }
  for (double b : beliefs) check_probability(b, problem_id);
  validate_steps(steps, problem_id);
}

std::vector<BeliefPair> make_belief_pairs(const BeliefTrace& trace, PairingMode mode) {
  if (trace.beliefs.size() < 2) {
    throw Error(ErrorKind::insufficient_trace,
                fmt::format("trace {} has {} belief(s)", trace.problem_id, trace.beliefs.size()));
  }
  for (double b : trace.beliefs) check_probability(b, trace.problem_id);

  const auto& b = trace.beliefs;
  std::vector<BeliefPair> out;
  if (mode == PairingMode::endpoint) {
    out.push_back({b.front(), b.back() - b.front(), trace.problem_id,
                   trace.setup_digest, 0});
    return out;
  }
  out.reserve(b.size() - 1);
  for (std::size_t t = 0; t + 1 < b.size(); ++t) {
    out.push_back({b[t], b[t + 1] - b[t], trace.problem_id, trace.setup_digest, t});
  }
  return out;
}

std::vector<ErrorPair> absolute_error_pairs(const BeliefTrace& trace,
                                            std::optional<int> ground_truth) {
  if (!ground_truth) {
    throw Error(ErrorKind::no_ground_truth, trace.problem_id);
  }
  if (*ground_truth != 0 && *ground_truth != 1) {
    throw Error(ErrorKind::invalid_record, "ground truth must be 0 or 1");
  }
  if (trace.beliefs.size() < 2) {
    throw Error(ErrorKind::insufficient_trace, trace.problem_id);
  }
  const double target = *ground_truth;
  std::vector<ErrorPair> out;
  out.reserve(trace.beliefs.size() - 1);
  for (std::size_t t = 0; t + 1 < trace.beliefs.size(); ++t) {
    double before = std::fabs(trace.beliefs[t] - target);
    double after = std::fabs(trace.beliefs[t + 1] - target);
    out.push_back({before, after - before});
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace mscore
