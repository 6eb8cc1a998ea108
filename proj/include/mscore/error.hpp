#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mscore {

enum class ErrorKind {
  // core
  invalid_record,
  insufficient_trace,
  no_ground_truth,
  // stats
  shape_mismatch,
  insufficient_samples,
  degenerate_regressor,
  heterogeneous_pairs,
  invalid_dof,
  no_samples,
  invalid_probability,
  degenerate_input,
  collinear_factors,
  baseline_absent,
  // sim
  invalid_config,
  malformed_fixture,
  // llm
  auth_failure,
  rate_limited_exhausted,
  malformed_backend_reply,
  backend_error,
  script_mismatch,
  // pipeline
  no_reasoning_produced,
  silent_debater,
  judge_format_error,
  unjudgeable_problem,
  no_overlap,
  // harness
  unknown_format,
  malformed_row,
  duplicate_id,
  empty_submission,
  unwritable_directory,
  io_error,
  single_level_factor,
};

/// Canonical short phrase for an error kind, e.g. "insufficient trace".
std::string_view error_phrase(ErrorKind kind);

/// Every failure in the library is reported as an Error carrying a kind.
/// what() is "<phrase>" or "<phrase>: <detail>".
class Error : public std::runtime_error {
 public:
  explicit Error(ErrorKind kind, std::string_view detail = {});

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mscore
