#pragma once

// JSON record shapes for the core types. Problems, trajectories and belief
// traces are stored one object per line (JSONL, UTF-8, LF).

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mscore/core.hpp"

namespace mscore {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ordered_json to_record(const Problem& p);
ordered_json to_record(const Setup& s);
ordered_json to_record(const Trajectory& t);
ordered_json to_record(const BeliefTrace& t);

// Parsers validate the type invariants and throw Error(invalid_record).
Problem problem_from_record(const json& j);
Setup setup_from_record(const json& j);
Trajectory trajectory_from_record(const json& j);
BeliefTrace trace_from_record(const json& j);

/// Reads a JSONL file into parsed objects; blank lines are skipped.
/// Parse failures throw Error(invalid_record) naming the 1-based line.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Serializes a record as one compact line (no trailing newline).
std::string to_line(const ordered_json& j);

}  // namespace mscore
