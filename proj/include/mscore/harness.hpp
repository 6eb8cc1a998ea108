#pragma once

// Dataset ingestion, run configuration, the on-disk run store, scoring and
// report emission. Everything the command-line tool does goes through here.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mscore/core.hpp"
#include "mscore/llm.hpp"
#include "mscore/records.hpp"
#include "mscore/sim.hpp"
#include "mscore/stats.hpp"

namespace mscore::harness {

namespace fs = std::filesystem;

// ---- ingestion ----------------------------------------------------------------

enum class InputFormat { canonical, forecasting_csv, cmv_export, openreview_export };

std::string_view to_string(InputFormat f);
/// Errors: unknown_format.
InputFormat parse_input_format(std::string_view s);

/// Option labels used for value-laden posts, which carry no ground truth.
inline constexpr std::string_view kCmvYes = "the stated view is correct";
inline constexpr std::string_view kCmvNo = "the stated view is incorrect";

/// Reads problems in one of the supported export shapes:
///
///   canonical          JSONL of problem records
///   forecasting_csv    CSV: id, question, resolution (YES/NO/1/0/empty),
///                      optional background, option_yes, option_no,
///                      resolved_after_cutoff
///   cmv_export         JSONL: {id, title, body}
///   openreview_export  JSONL: {id, venue, title?, abstract?, reviews?: [..],
///                      rebuttals?: [..], decision?}
///
/// Errors: malformed_row (with the row or line number), duplicate_id.
std::vector<Problem> load_problems(const fs::path& path, InputFormat format);

/// Area-chair question for a submission. Errors: empty_submission.
std::string build_openreview_statement(std::string_view venue, std::string_view submission_info);

// ---- configuration ------------------------------------------------------------

struct DatasetSpec {
  fs::path path;
  InputFormat format = InputFormat::canonical;
};

struct SetupSpec {
  std::string model_id;
  PromptCondition prompt = PromptCondition::none;
  Technique technique = Technique::cot;
  std::string judge_model_id;
};

struct BackendSpec {
  std::string id;
  std::string kind;  // "http", "scripted" or "mock"
  std::string endpoint;
  std::string credential_env;
  fs::path script;
  std::uint64_t mock_seed = 0;
  int timeout_s = 120;
  int max_in_flight = 4;
};

struct SimulationSpec {
  std::string agent;  // "bayesian" or "entrenched"
  sim::BayesianAgentConfig bayesian;
  sim::EntrenchedAgentConfig entrenched;
};

struct RunConfig {
  std::optional<std::string> run_id;
  std::uint64_t seed = 0;
  PairingMode pairing = PairingMode::per_step;
  std::size_t parallel = 1;
  fs::path out_dir = "out";
  std::optional<fs::path> cache_dir = fs::path("cache");
  std::vector<DatasetSpec> datasets;
  std::vector<SetupSpec> setups;
  std::map<std::string, BackendSpec> backends;
  std::map<std::string, std::string> model_backends;  // model id -> backend id
  std::string default_backend;
  std::map<std::string, double> temperatures;  // per-model overrides
  std::optional<int> max_tokens;
  std::size_t debate_rounds = 3;
  std::vector<SimulationSpec> simulations;
};

/// Parses a JSON run configuration; relative paths resolve against
/// base_dir. Errors: invalid_config.
RunConfig parse_config(const json& j, const fs::path& base_dir);
RunConfig load_config(const fs::path& path);

/// The reproducibility-relevant part of a config (no output locations).
ordered_json config_snapshot(const RunConfig& config);

/// Explicit run_id when configured, else "run-" + 12 hex digits of the
/// snapshot digest.
std::string derive_run_id(const RunConfig& config);

// ---- run store ----------------------------------------------------------------

struct UnjudgedRecord {
  std::string problem_id;
  std::string setup_digest;
  std::string judge_model_id;
  int attempts = 0;
  std::vector<std::string> errors;
  std::string last_reply;
};

struct FailureRecord {
  std::string problem_id;
  std::string setup_digest;
  std::string error;
  std::size_t turn = 0;  // 0 when not a debate turn
  std::optional<Trajectory> partial;
};

/// One directory per run: <out_dir>/<run_id>/. Every record carries the
/// run_id; files are replaced atomically and the manifest is written last.
class RunStore {
 public:
  RunStore(const fs::path& out_dir, std::string run_id);
  /// Opens an existing run directory, taking the run_id from its manifest.
  static RunStore open(const fs::path& run_dir);

  const fs::path& dir() const { return dir_; }
  const std::string& run_id() const { return run_id_; }
  fs::path report_dir() const { return dir_ / "report"; }
  bool has(std::string_view file) const;

  void write_problems(std::span<const Problem> problems) const;
  void write_setups(std::span<const Setup> setups) const;
  void write_trajectories(std::span<const Trajectory> trajectories) const;
  void write_traces(std::span<const BeliefTrace> traces, std::string_view file = "traces.jsonl") const;
  void write_unjudged(std::span<const UnjudgedRecord> records, std::string_view file = "unjudged.jsonl") const;
  void write_failures(std::span<const FailureRecord> records) const;

  std::vector<Problem> read_problems() const;
  std::vector<Setup> read_setups() const;
  std::vector<Trajectory> read_trajectories() const;
  std::vector<BeliefTrace> read_traces(std::string_view file = "traces.jsonl") const;

  ordered_json read_manifest() const;
  /// Merges `stage` into the manifest (creating it when absent) and stamps
  /// finished_at.
  void update_manifest(const ordered_json& base, std::string_view stage, const ordered_json& stage_info) const;

  /// Strips and checks the run_id of a stored record.
  json unwrap(json record, std::string_view file, std::size_t line) const;

 private:
  void write_lines(std::string_view file, const std::vector<ordered_json>& records) const;
  std::vector<json> read_lines(std::string_view file) const;

  fs::path dir_;
  std::string run_id_;
};

/// Writes text to path through a temporary file and a rename.
void write_file_atomic(const fs::path& path, std::string_view text);

// ---- backends and stages --------------------------------------------------------

/// Deterministic offline backend: replies are a function of the request and
/// a seed. CoT prompts get 2 to 6 paragraphs, debate prompts one paragraph,
/// trace prompts a filled list of the advertised length, initial-belief
/// prompts a single belief.
class MockTransport : public llm::Transport {
 public:
  explicit MockTransport(std::uint64_t seed) : seed_(seed) {}
  llm::WireReply send(const llm::ChatRequest& request) override;

 private:
  std::uint64_t seed_;
};

class Backends {
 public:
  explicit Backends(const RunConfig& config);
  llm::ChatClient& for_model(const std::string& model_id);
  /// True when a strictly ordered scripted backend is configured.
  bool ordered() const { return ordered_; }
  /// Throws script_mismatch if any scripted backend has unconsumed entries.
  void verify_scripts() const;

 private:
  std::map<std::string, std::shared_ptr<llm::ChatClient>> clients_;
  std::vector<std::shared_ptr<llm::ScriptedTransport>> scripts_;
  std::map<std::string, std::string> model_backends_;
  std::string default_backend_;
  bool ordered_ = false;
};

struct StageSummary {
  std::size_t produced = 0;
  std::size_t failed = 0;
};

/// Loads the datasets, runs every setup on every problem and stores
/// problems, setups, trajectories and failures.
StageSummary generate(const RunConfig& config, const RunStore& store, Backends& backends);

/// Judges stored trajectories. With a judge override the traces go to
/// traces-<judge>.jsonl so a second judge can be compared against the first.
StageSummary judge(const RunConfig& config, const RunStore& store, Backends& backends,
                   const std::string& judge_override = {});

/// Runs the configured synthetic agents and stores their problems, setups
/// and traces.
StageSummary simulate(const RunConfig& config, const RunStore& store);

/// Base manifest content for a run.
ordered_json manifest_base(const RunConfig& config, const std::string& run_id);

// ---- scoring and reports --------------------------------------------------------

inline constexpr std::string_view kInsufficientData = "insufficient data";

struct ReportCell {
  Setup setup;
  std::string setup_digest;
  std::string status = "ok";  // "ok" or kInsufficientData
  std::optional<stats::MartingaleReport> martingale;
  std::optional<double> brier;
  std::size_t n_problems = 0;
  std::vector<BeliefPair> pairs;
  std::vector<ErrorPair> error_pairs;
};

/// Groups traces by setup and scores each group. Brier uses b_T and is
/// present only when every problem in the cell is labeled.
std::vector<ReportCell> score_traces(std::span<const BeliefTrace> traces, std::span<const Setup> setups,
                                     std::span<const Problem> problems, PairingMode mode);
std::vector<ReportCell> score_run(const RunStore& store, PairingMode mode);

struct Histogram2D {
  double x_lo = 0.0, y_lo = -1.0, width = 0.05;
  std::size_t nx = 20, ny = 40;
  std::vector<std::size_t> counts = std::vector<std::size_t>(20 * 40, 0);

  void add(double x, double y);
  std::size_t at(std::size_t ix, std::size_t iy) const { return counts[ix * ny + iy]; }
  std::size_t total() const;
};

/// (b_prior, delta_b) over [0,1] x [-1,1], bin width 0.05.
Histogram2D belief_density(std::span<const BeliefPair> pairs);
/// (|b_prior - b*|, delta |b - b*|) over [0,1] x [-1,1], bin width 0.05.
Histogram2D error_density(std::span<const ErrorPair> pairs);

/// Writes grid.md, grid.csv, scatter.csv, density_belief.csv,
/// density_error.csv, pairs.csv, cells.json and three SVG renderings.
/// Returns the paths written. Errors: unwritable_directory.
std::vector<fs::path> emit_reports(std::span<const ReportCell> cells, const fs::path& out_dir,
                                   std::string_view run_id);

ordered_json to_json(const ReportCell& cell);

/// Factor attribution over every trace of the run; writes attribution.json
/// and attribution.md into the report directory. Errors: single_level_factor
/// plus anything attribute_factors raises.
stats::AttributionReport attribute_run(const RunStore& store, const std::map<stats::Factor, std::string>& baselines,
                                       PairingMode mode);

/// Pearson/Spearman agreement between two trace files of the same
/// trajectories.
stats::AgreementReport agreement_between(const fs::path& traces_a, const fs::path& traces_b);

struct VerifyReport {
  std::size_t runs = 0;
  std::size_t records = 0;
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

/// Checks every run under out_dir: manifests present, every record carries
/// its directory's run_id, traces refer to known problems and setups, no
/// (problem, setup) is traced twice, no stray files outside a run.
VerifyReport verify(const fs::path& out_dir);

/// Process exit code for an error kind: 2 config, 3 backend, 4 data.
int exit_code(ErrorKind kind);

}  // namespace mscore::harness
