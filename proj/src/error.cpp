#include "mscore/error.hpp"

namespace mscore {

std::string_view error_phrase(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_record: return "invalid record";
    case ErrorKind::insufficient_trace: return "insufficient trace";
    case ErrorKind::no_ground_truth: return "no ground truth";
    case ErrorKind::shape_mismatch: return "shape mismatch";
    case ErrorKind::insufficient_samples: return "insufficient samples";
    case ErrorKind::degenerate_regressor: return "degenerate regressor";
    case ErrorKind::heterogeneous_pairs: return "heterogeneous pairs";
    case ErrorKind::invalid_dof: return "invalid degrees of freedom";
    case ErrorKind::no_samples: return "no samples";
    case ErrorKind::invalid_probability: return "invalid probability";
    case ErrorKind::degenerate_input: return "degenerate input";
    case ErrorKind::collinear_factors: return "collinear factors";
    case ErrorKind::baseline_absent: return "baseline level absent";
    case ErrorKind::invalid_config: return "invalid config";
    case ErrorKind::malformed_fixture: return "malformed fixture";
    case ErrorKind::auth_failure: return "auth failure";
    case ErrorKind::rate_limited_exhausted: return "rate limited exhausted";
    case ErrorKind::malformed_backend_reply: return "malformed backend reply";
    case ErrorKind::backend_error: return "backend error";
    case ErrorKind::script_mismatch: return "script mismatch";
    case ErrorKind::no_reasoning_produced: return "no reasoning produced";
    case ErrorKind::silent_debater: return "silent debater";
    case ErrorKind::judge_format_error: return "judge format error";
    case ErrorKind::unjudgeable_problem: return "unjudgeable problem";
    case ErrorKind::no_overlap: return "no overlap";
    case ErrorKind::unknown_format: return "unknown format";
    case ErrorKind::malformed_row: return "malformed row";
    case ErrorKind::duplicate_id: return "duplicate id";
    case ErrorKind::empty_submission: return "empty submission";
    case ErrorKind::unwritable_directory: return "unwritable directory";
    case ErrorKind::io_error: return "io error";
    case ErrorKind::single_level_factor: return "single-level factor";
  }
  return "error";
}

namespace {

std::string compose(ErrorKind kind, std::string_view detail) {
  std::string msg(error_phrase(kind));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}

}  // namespace

Error::Error(ErrorKind kind, std::string_view detail)
    : std::runtime_error(compose(kind, detail)), kind_(kind) {}

}  // namespace mscore
