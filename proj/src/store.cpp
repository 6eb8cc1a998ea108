#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/harness.hpp"

namespace mscore::harness {

namespace {

bool valid_run_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  }
  return true;
}

ordered_json with_run_id(std::string_view run_id, const ordered_json& record) {
  ordered_json j;
  j["run_id"] = run_id;
  for (const auto& [k, v] : record.items()) j[k] = v;
  return j;
}

ordered_json to_record(const UnjudgedRecord& r) {
  ordered_json j;
  j["problem_id"] = r.problem_id;
  j["setup_digest"] = r.setup_digest;
  j["judge_model_id"] = r.judge_model_id;
  j["attempts"] = r.attempts;
  j["errors"] = r.errors;
  j["last_reply"] = r.last_reply;
  return j;
}

ordered_json to_record(const FailureRecord& r) {
  ordered_json j;
  j["problem_id"] = r.problem_id;
  j["setup_digest"] = r.setup_digest;
  j["error"] = r.error;
  j["turn"] = r.turn;
  j["partial"] = r.partial ? mscore::to_record(*r.partial) : ordered_json(nullptr);
  return j;
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view text) {
  static std::atomic<std::uint64_t> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::unwritable_directory, fmt::format("{}: {}", path.parent_path().string(), ec.message()));
  }
  auto tmp = path;
  tmp += fmt::format(".tmp.{}.{}", std::hash<std::thread::id>{}(std::this_thread::get_id()), counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::unwritable_directory, path.parent_path().string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::io_error, fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::io_error, fmt::format("cannot replace {}", path.string()));
  }
}

RunStore::RunStore(const fs::path& out_dir, std::string run_id) : run_id_(std::move(run_id)) {
  if (!valid_run_id(run_id_)) throw Error(ErrorKind::invalid_config, fmt::format("invalid run id '{}'", run_id_));
  dir_ = out_dir / run_id_;
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::unwritable_directory, fmt::format("{}: {}", dir_.string(), ec.message()));
}

RunStore RunStore::open(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json", std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, fmt::format("{} has no manifest.json", run_dir.string()));
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_record, fmt::format("manifest: {}", e.what()));
  }
  if (!manifest.contains("run_id") || !manifest["run_id"].is_string()) {
    throw Error(ErrorKind::invalid_record, "manifest lacks run_id");
  }
  const auto id = manifest["run_id"].get<std::string>();
  auto dir = fs::absolute(run_dir).lexically_normal();
  if (dir.filename().empty()) dir = dir.parent_path();
  if (dir.filename() != id) {
    throw Error(ErrorKind::invalid_record,
                fmt::format("manifest run_id {} does not match directory {}", id, run_dir.string()));
  }
  return RunStore(dir.parent_path(), id);
}

bool RunStore::has(std::string_view file) const { return fs::exists(dir_ / file); }

void RunStore::write_lines(std::string_view file, const std::vector<ordered_json>& records) const {
  std::string text;
  for (const auto& r : records) {
    text += to_line(with_run_id(run_id_, r));
    text += '\n';
  }
  write_file_atomic(dir_ / file, text);
}

std::vector<json> RunStore::read_lines(std::string_view file) const {
  const auto path = dir_ / file;
  if (!fs::exists(path)) return {};
  auto records = read_jsonl(path);
  for (std::size_t i = 0; i < records.size(); ++i) records[i] = unwrap(std::move(records[i]), file, i + 1);
  return records;
}

json RunStore::unwrap(json record, std::string_view file, std::size_t line) const {
  if (!record.is_object() || !record.contains("run_id") || record["run_id"] != run_id_) {
    throw Error(ErrorKind::invalid_record, fmt::format("{} record {} does not belong to run {}", file, line, run_id_));
  }
  record.erase("run_id");
  return record;
}

void RunStore::write_problems(std::span<const Problem> problems) const {
  std::vector<ordered_json> out;
  for (const auto& p : problems) out.push_back(mscore::to_record(p));
  write_lines("problems.jsonl", out);
}

void RunStore::write_setups(std::span<const Setup> setups) const {
  std::vector<ordered_json> out;
  for (const auto& s : setups) {
    auto r = mscore::to_record(s);
    r["digest"] = s.digest();
    out.push_back(std::move(r));
  }
  write_lines("setups.jsonl", out);
}

void RunStore::write_trajectories(std::span<const Trajectory> trajectories) const {
  std::vector<ordered_json> out;
  for (const auto& t : trajectories) out.push_back(mscore::to_record(t));
  write_lines("trajectories.jsonl", out);
}

void RunStore::write_traces(std::span<const BeliefTrace> traces, std::string_view file) const {
  std::vector<ordered_json> out;
  for (const auto& t : traces) out.push_back(mscore::to_record(t));
  write_lines(file, out);
}

void RunStore::write_unjudged(std::span<const UnjudgedRecord> records, std::string_view file) const {
  std::vector<ordered_json> out;
  for (const auto& r : records) out.push_back(to_record(r));
  write_lines(file, out);
}

void RunStore::write_failures(std::span<const FailureRecord> records) const {
  std::vector<ordered_json> out;
  for (const auto& r : records) out.push_back(to_record(r));
  write_lines("failures.jsonl", out);
}

std::vector<Problem> RunStore::read_problems() const {
  std::vector<Problem> out;
  for (const auto& j : read_lines("problems.jsonl")) out.push_back(problem_from_record(j));
  return out;
}

std::vector<Setup> RunStore::read_setups() const {
  std::vector<Setup> out;
  for (const auto& j : read_lines("setups.jsonl")) out.push_back(setup_from_record(j));
  return out;
}

std::vector<Trajectory> RunStore::read_trajectories() const {
  std::vector<Trajectory> out;
  for (const auto& j : read_lines("trajectories.jsonl")) out.push_back(trajectory_from_record(j));
  return out;
}

std::vector<BeliefTrace> RunStore::read_traces(std::string_view file) const {
  std::vector<BeliefTrace> out;
  for (const auto& j : read_lines(file)) out.push_back(trace_from_record(j));
  return out;
}

ordered_json RunStore::read_manifest() const {
  std::ifstream in(dir_ / "manifest.json", std::ios::binary);
  if (!in) return ordered_json::object();
  try {
    return ordered_json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_record, fmt::format("manifest: {}", e.what()));
  }
}

void RunStore::update_manifest(const ordered_json& base, std::string_view stage, const ordered_json& stage_info) const {
  auto manifest = read_manifest();
  if (manifest.empty()) {
    manifest = base;
    manifest["started_at"] = utc_timestamp();
    manifest["stages"] = ordered_json::object();
  } else if (manifest.value("run_id", "") != run_id_) {
    throw Error(ErrorKind::invalid_record, "existing manifest belongs to another run");
  }
  manifest["stages"][std::string(stage)] = stage_info;
  manifest["finished_at"] = utc_timestamp();
  write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace mscore::harness
