#pragma once

// Trajectory generation (chain of thought, two-sided debate) and belief
// elicitation through an independent judge model.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mscore/core.hpp"
#include "mscore/error.hpp"
#include "mscore/llm.hpp"

namespace mscore::pipeline {

inline constexpr std::size_t kMaxSteps = 64;
inline constexpr std::size_t kDefaultDebateRounds = 3;
inline constexpr int kJudgeRetries = 3;

/// Splits on blank lines (CR, LF and whitespace-only lines tolerated), trims
/// every step and drops empty ones. Steps past kMaxSteps are merged into the
/// last kept step, joined by single newlines.
std::vector<std::string> split_steps(std::string_view text);

/// Problem statement followed by its extra_info items, as shown to reasoners
/// and to the trace judge.
std::string reasoner_statement(const Problem& problem);

struct GenerationOptions {
  std::optional<double> temperature;  // default_temperature(reasoner, model) when unset
  std::optional<int> max_tokens;
  std::size_t debate_rounds = kDefaultDebateRounds;
  std::uint64_t seed = 0;
  std::function<std::string()> clock;  // created_at source; utc_timestamp when unset
};

/// One completion of the CoT prompt, split into steps.
/// Errors: no_reasoning_produced; backend errors propagate.
Trajectory run_cot(const Problem& problem, const Setup& setup, llm::ChatClient& backend,
                   const GenerationOptions& options = {});

/// Raised when a debate turn fails. turn() is 1-based over the whole
/// transcript (pro speaks on odd turns); partial() holds the turns completed
/// before the failure.
class DebateError : public Error {
 public:
  DebateError(ErrorKind kind, std::size_t turn, Trajectory partial, std::string_view detail);

  std::size_t turn() const { return turn_; }
  const Trajectory& partial() const { return partial_; }

 private:
  std::size_t turn_;
  Trajectory partial_;
};

/// Pro (option_yes) and con (option_no) clones alternate for `rounds` full
/// rounds, pro first. Each side sees the opponent's previous speech as the
/// next user message. Errors: DebateError(silent_debater | backend kind).
Trajectory run_debate(const Problem& problem, const Setup& setup, llm::ChatClient& backend,
                      const GenerationOptions& options = {});

/// "reasoning steps" or "debate turns".
std::string_view name_steps(TranscriptKind kind);

/// JSON list shown to the judge: a blank leading element followed by one
/// element per step, every belief set to null.
std::string serialize_steps(std::span<const ReasoningStep> steps, TranscriptKind kind);

/// Renders the trace template; num_steps = steps.size() + 1.
std::string build_trace_prompt(const Problem& problem, std::span<const ReasoningStep> steps,
                               TranscriptKind kind);

struct JudgeFill {
  std::string raw_reply;
  std::vector<double> beliefs;
  int retries_used = 0;
  std::vector<std::string> warnings;  // one per clamped value
};

/// Collects every "belief" field value in the reply, tolerating code fences,
/// prose and Python-style quoting; clamps to [0,1] with a warning.
/// Errors: judge_format_error on a count mismatch or non-numeric value.
JudgeFill parse_trace_reply(std::string_view reply, std::size_t expected_count);

struct JudgeOptions {
  std::string judge_model_id;  // falls back to the trajectory's setup
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  int max_retries = kJudgeRetries;
};

struct JudgeOutcome {
  std::optional<BeliefTrace> trace;  // absent => unjudged
  JudgeFill fill;                    // last attempt
  std::vector<std::string> errors;   // one per failed attempt
  int attempts = 0;
  std::string judge_model_id;
};

/// Asks the judge to fill the trace, re-asking up to max_retries times on a
/// format error. Each re-ask uses a distinct cache variant so a cached bad
/// reply is not replayed. Backend errors propagate.
JudgeOutcome judge_trajectory(const Problem& problem, const Trajectory& trajectory,
                              llm::ChatClient& judge, const JudgeOptions& options = {});

/// Initial-belief prompt, with the information block appended when
/// extra_info is nonempty.
std::string build_initial_prompt(const Problem& problem, std::span<const Attachment> extra_info);

/// Errors: unjudgeable_problem after the retries are spent.
double elicit_initial_belief(const Problem& problem, llm::ChatClient& judge,
                             std::span<const Attachment> extra_info, const JudgeOptions& options = {});

struct PairedBeliefs {
  std::vector<double> a;
  std::vector<double> b;
  std::size_t unmatched_a = 0;
  std::size_t unmatched_b = 0;
};

/// Inner join on (problem_id, setup_digest, belief index), ordered by key.
/// Errors: no_overlap; invalid_record on a duplicated (problem, setup) trace.
PairedBeliefs judge_pairing(std::span<const BeliefTrace> traces_a, std::span<const BeliefTrace> traces_b);

}  // namespace mscore::pipeline
