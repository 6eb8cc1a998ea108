#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "mscore/csv.hpp"
#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/templates.hpp"

namespace mscore::harness {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Calls fn(object, line) for each nonblank JSONL line.
template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, fmt::format("cannot open {}", path.string()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trimmed(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::malformed_row, fmt::format("line {}: {}", lineno, e.what()));
    }
    if (!j.is_object()) throw Error(ErrorKind::malformed_row, fmt::format("line {}: not an object", lineno));
    try {
      fn(j, lineno);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::malformed_row) throw;
      throw Error(ErrorKind::malformed_row, fmt::format("line {}: {}", lineno, e.what()));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::malformed_row, fmt::format("line {}: {}", lineno, e.what()));
    }
  }
}

std::string string_field(const json& j, const char* key, bool required) {
  if (!j.contains(key) || j[key].is_null()) {
    if (required) throw Error(ErrorKind::malformed_row, fmt::format("missing '{}'", key));
    return {};
  }
  if (!j[key].is_string()) throw Error(ErrorKind::malformed_row, fmt::format("'{}' must be a string", key));
  return j[key].get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key) || j[key].is_null()) return out;
  if (!j[key].is_array()) throw Error(ErrorKind::malformed_row, fmt::format("'{}' must be an array", key));
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw Error(ErrorKind::malformed_row, fmt::format("'{}' must hold strings", key));
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<Problem> load_forecasting_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, fmt::format("cannot open {}", path.string()));
  csv::Table table(in);
  const auto id_col = table.column("id");
  const auto q_col = table.column("question");
  if (!id_col || !q_col) throw Error(ErrorKind::malformed_row, "row 1: header needs 'id' and 'question'");
  const auto res_col = table.column("resolution");
  const auto bg_col = table.column("background");
  const auto yes_col = table.column("option_yes");
  const auto no_col = table.column("option_no");
  const auto cutoff_col = table.column("resolved_after_cutoff");

  std::vector<Problem> out;
  while (auto row = table.next()) {
    const auto& r = *row;
    const auto where = fmt::format("row {}", table.row_number());
    Problem p;
    p.id = trimmed(r[*id_col]);
    p.statement = trimmed(r[*q_col]);
    if (p.id.empty() || p.statement.empty()) {
      throw Error(ErrorKind::malformed_row, fmt::format("{}: empty id or question", where));
    }
    p.domain_tag = DomainTag::forecasting;
    p.option_yes = yes_col && !trimmed(r[*yes_col]).empty() ? trimmed(r[*yes_col]) : "Yes";
    p.option_no = no_col && !trimmed(r[*no_col]).empty() ? trimmed(r[*no_col]) : "No";
    if (res_col) {
      const auto v = lower(trimmed(r[*res_col]));
      if (v == "yes" || v == "1" || v == "true") {
        p.ground_truth = 1;
      } else if (v == "no" || v == "0" || v == "false") {
        p.ground_truth = 0;
      } else if (!v.empty()) {
        throw Error(ErrorKind::malformed_row, fmt::format("{}: unrecognized resolution '{}'", where, r[*res_col]));
      }
    }
    if (bg_col && !trimmed(r[*bg_col]).empty()) p.extra_info.push_back({"background", trimmed(r[*bg_col])});
    if (cutoff_col) {
      const auto v = lower(trimmed(r[*cutoff_col]));
      if (v == "true" || v == "1") {
        p.resolved_after_cutoff = true;
      } else if (v == "false" || v == "0") {
        p.resolved_after_cutoff = false;
      } else if (!v.empty()) {
        throw Error(ErrorKind::malformed_row, fmt::format("{}: bad resolved_after_cutoff '{}'", where, v));
      }
    }
    try {
      p.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::malformed_row, fmt::format("{}: {}", where, e.what()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Problem> load_cmv(const fs::path& path) {
  std::vector<Problem> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    Problem p;
    p.id = string_field(j, "id", true);
    const auto title = trimmed(string_field(j, "title", true));
    const auto body = trimmed(string_field(j, "body", false));
    if (title.empty()) throw Error(ErrorKind::malformed_row, "empty title");
    p.statement = body.empty() ? title : title + "\n\n" + body;
    p.option_yes = kCmvYes;
    p.option_no = kCmvNo;
    p.domain_tag = DomainTag::changemyview;
    p.validate();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<Problem> load_openreview(const fs::path& path) {
  std::vector<Problem> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    Problem p;
    p.id = string_field(j, "id", true);
    const auto venue = trimmed(string_field(j, "venue", true));
    const auto title = trimmed(string_field(j, "title", false));
    const auto abstract = trimmed(string_field(j, "abstract", false));
    const auto submission_info = !title.empty() ? "Title: " + title : abstract;
    p.statement = build_openreview_statement(venue, submission_info);
    p.option_yes = "ACCEPTED";
    p.option_no = "REJECTED";
    p.domain_tag = DomainTag::openreview;
    if (!abstract.empty()) p.extra_info.push_back({"abstract", abstract});
    const auto reviews = string_list(j, "reviews");
    for (std::size_t i = 0; i < reviews.size(); ++i) p.extra_info.push_back({fmt::format("review {}", i + 1), reviews[i]});
    const auto rebuttals = string_list(j, "rebuttals");
    for (std::size_t i = 0; i < rebuttals.size(); ++i) {
      p.extra_info.push_back({fmt::format("rebuttal {}", i + 1), rebuttals[i]});
    }
    const auto decision = lower(string_field(j, "decision", false));
    if (decision.find("accept") != std::string::npos) {
      p.ground_truth = 1;
    } else if (decision.find("reject") != std::string::npos) {
      p.ground_truth = 0;
    } else if (!decision.empty()) {
      throw Error(ErrorKind::malformed_row, fmt::format("unrecognized decision '{}'", decision));
    }
    p.validate();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<Problem> load_canonical(const fs::path& path) {
  std::vector<Problem> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    auto p = problem_from_record(j);
    p.validate();
    out.push_back(std::move(p));
  });
  return out;
}

}  // namespace

std::string_view to_string(InputFormat f) {
  switch (f) {
    case InputFormat::canonical: return "canonical";
    case InputFormat::forecasting_csv: return "forecasting_csv";
    case InputFormat::cmv_export: return "cmv_export";
    case InputFormat::openreview_export: return "openreview_export";
  }
  return "?";
}

InputFormat parse_input_format(std::string_view s) {
  for (auto f : {InputFormat::canonical, InputFormat::forecasting_csv, InputFormat::cmv_export,
                 InputFormat::openreview_export}) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorKind::unknown_format, std::string(s));
}

std::string build_openreview_statement(std::string_view venue, std::string_view submission_info) {
  if (trimmed(submission_info).empty()) throw Error(ErrorKind::empty_submission, "submission info is empty");
  if (trimmed(venue).empty()) throw Error(ErrorKind::empty_submission, "venue is empty");
  return format_template(template_text(Template::openreview_question),
                         {{"venue", std::string(venue)}, {"submission_info", std::string(submission_info)}});
}

std::vector<Problem> load_problems(const fs::path& path, InputFormat format) {
  std::vector<Problem> problems;
  switch (format) {
    case InputFormat::canonical: problems = load_canonical(path); break;
    case InputFormat::forecasting_csv: problems = load_forecasting_csv(path); break;
    case InputFormat::cmv_export: problems = load_cmv(path); break;
    case InputFormat::openreview_export: problems = load_openreview(path); break;
  }
  std::set<std::string> seen;
  for (const auto& p : problems) {
    if (!seen.insert(p.id).second) throw Error(ErrorKind::duplicate_id, p.id);
  }
  return problems;
}

}  // namespace mscore::harness
