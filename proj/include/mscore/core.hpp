#pragma once

// Domain types shared by every module, plus the conversion from judged
// belief traces to the (b_prior, delta_b) observations that the Martingale
// Score regresses on.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mscore {

enum class DomainTag { forecasting, changemyview, openreview, synthetic };
enum class PromptCondition { none, critical_thinking, prior_conforming };
enum class Technique { cot, debate };
enum class Speaker { reasoner, pro, con };
enum class TranscriptKind { cot_steps, debate_turns };
enum class PairingMode { per_step, endpoint };

std::string_view to_string(DomainTag v);
std::string_view to_string(PromptCondition v);
std::string_view to_string(Technique v);
std::string_view to_string(Speaker v);
std::string_view to_string(TranscriptKind v);
std::string_view to_string(PairingMode v);

// Parsers accept the snake_case names above; PairingMode also accepts the
// CLI spelling "per-step". Unknown names throw Error(invalid_record).
DomainTag parse_domain_tag(std::string_view s);
PromptCondition parse_prompt_condition(std::string_view s);
Technique parse_technique(std::string_view s);
Speaker parse_speaker(std::string_view s);
TranscriptKind parse_transcript_kind(std::string_view s);
PairingMode parse_pairing_mode(std::string_view s);

struct Attachment {
  std::string name;
  std::string text;

  bool operator==(const Attachment&) const = default;
};

struct Problem {
  std::string id;
  std::string statement;
  std::string option_yes;
  std::string option_no;
  DomainTag domain_tag = DomainTag::synthetic;
  std::optional<int> ground_truth;  // 1 <=> option_yes resolved true
  std::vector<Attachment> extra_info;
  std::optional<bool> resolved_after_cutoff;

  void validate() const;

  bool operator==(const Problem&) const = default;
};

struct Setup {
  std::string model_id;
  PromptCondition prompt_condition = PromptCondition::none;
  Technique technique = Technique::cot;
  DomainTag domain_tag = DomainTag::synthetic;
  std::string judge_model_id;

  /// Stable 16-hex-digit content digest identifying the setup.
  std::string digest() const;

  bool operator==(const Setup&) const = default;
};

struct ReasoningStep {
  std::size_t index = 0;
  Speaker speaker = Speaker::reasoner;
  std::string text;

  bool operator==(const ReasoningStep&) const = default;
};

struct Trajectory {
  std::string problem_id;
  Setup setup;
  std::vector<ReasoningStep> steps;
  TranscriptKind transcript_kind = TranscriptKind::cot_steps;
  std::uint64_t seed = 0;
  std::string created_at;
  std::string raw_reply;  // CoT completion as returned; empty for debate

  void validate() const;

  bool operator==(const Trajectory&) const = default;
};

struct BeliefTrace {
  std::string problem_id;
  std::string setup_digest;
  Technique technique = Technique::cot;
  std::string judge_model_id;
  std::vector<double> beliefs;  // b_0..b_T, b_0 is the initial belief
  std::vector<ReasoningStep> steps;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;

  void validate() const;

  bool operator==(const BeliefTrace&) const = default;
};

struct BeliefPair {
  double b_prior = 0.0;
  double delta_b = 0.0;
  std::string problem_id;
  std::string setup_digest;
  std::size_t step_index = 0;

  bool operator==(const BeliefPair&) const = default;
};

struct ErrorPair {
  double prior_error = 0.0;
  double delta_error = 0.0;
};

std::vector<BeliefPair> make_belief_pairs(const BeliefTrace& trace, PairingMode mode);

/// (|b_t - b*|, |b_{t+1} - b*| - |b_t - b*|) per step. Throws
/// Error(no_ground_truth) when the label is absent.
std::vector<ErrorPair> absolute_error_pairs(const BeliefTrace& trace,
                                            std::optional<int> ground_truth);

/// Lowercase hex SHA-256 of the input.
std::string sha256_hex(std::string_view data);

/// Current UTC time as ISO-8601 with second resolution.
std::string utc_timestamp();

}  // namespace mscore
