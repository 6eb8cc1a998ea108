#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/pipeline.hpp"

namespace mscore::harness {

namespace {

constexpr std::string_view kDegenerate = "degenerate regressor";
constexpr double kRandomGuessBrier = 0.25;

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

auto setup_key(const Setup& s) {
  return std::make_tuple(s.model_id, to_string(s.technique), to_string(s.prompt_condition), to_string(s.domain_tag),
                         s.judge_model_id);
}

std::size_t bin(double v, double lo, double width, std::size_t n) {
  const double k = std::floor((v - lo) * (1.0 / width));
  if (!(k > 0)) return 0;
  return std::min(static_cast<std::size_t>(k), n - 1);
}

std::string cell_text(const ReportCell& c) {
  if (c.status != "ok") return c.status;
  return stats::format_score_cell(c.martingale->ols.slope, c.martingale->ols.p_value);
}

std::string density_csv(std::string_view run_id, const std::vector<std::pair<std::string, Histogram2D>>& scopes) {
  std::string out = "scope,x_lo,x_hi,y_lo,y_hi,count,run_id\n";
  for (const auto& [scope, h] : scopes) {
    for (std::size_t ix = 0; ix < h.nx; ++ix) {
      for (std::size_t iy = 0; iy < h.ny; ++iy) {
        out += fmt::format("{},{:.2f},{:.2f},{:.2f},{:.2f},{},{}\n", scope, h.x_lo + ix * h.width,
                           h.x_lo + (ix + 1) * h.width, h.y_lo + iy * h.width, h.y_lo + (iy + 1) * h.width,
                           h.at(ix, iy), run_id);
      }
    }
  }
  return out;
}

// Plot area shared by the SVG renderings.
constexpr double kLeft = 60, kTop = 40, kWidth = 400, kHeight = 300;

std::string svg_open(std::string_view title, std::string_view run_id, std::string_view x_label,
                     std::string_view y_label) {
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<!-- run_id: {2} -->\n"
      "<title>{3} ({2})</title>\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{4}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{3}</text>\n"
      "<text x=\"{5}\" y=\"{6}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{7}</text>\n"
      "<text x=\"16\" y=\"{8}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {8})\">{9}</text>\n",
      kLeft + kWidth + 40, kTop + kHeight + 50, xml_escape(run_id), xml_escape(title), kLeft, kLeft + kWidth / 2,
      kTop + kHeight + 36, xml_escape(x_label), kTop + kHeight / 2, xml_escape(y_label));
  return out;
}

std::string svg_axes(double x_lo, double x_hi, double y_lo, double y_hi) {
  return fmt::format(
      "<rect x=\"{0}\" y=\"{1}\" width=\"{2}\" height=\"{3}\" fill=\"none\" stroke=\"black\"/>\n"
      "<text x=\"{0}\" y=\"{4}\" font-family=\"sans-serif\" font-size=\"10\">{5:g}</text>\n"
      "<text x=\"{6}\" y=\"{4}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{7:g}</text>\n"
      "<text x=\"{8}\" y=\"{9}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{10:g}</text>\n"
      "<text x=\"{8}\" y=\"{11}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{12:g}</text>\n",
      kLeft, kTop, kWidth, kHeight, kTop + kHeight + 14, x_lo, kLeft + kWidth, x_hi, kLeft - 4, kTop + kHeight, y_lo,
      kTop + 10, y_hi);
}

std::string scatter_svg(std::string_view run_id, const std::vector<std::pair<double, double>>& points) {
  double x_hi = 0.1;
  double y_hi = 0.3;
  for (const auto& [x, y] : points) {
    x_hi = std::max(x_hi, x);
    y_hi = std::max(y_hi, y);
  }
  x_hi = std::ceil(x_hi * 10) / 10;
  y_hi = std::ceil(y_hi * 10) / 10;
  auto out = svg_open("Brier score against |Martingale Score|", run_id, "|M|", "Brier");
  out += svg_axes(0, x_hi, 0, y_hi);
  const double base_y = kTop + kHeight * (1 - kRandomGuessBrier / y_hi);
  out += fmt::format(
      "<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n", kLeft,
      base_y, kLeft + kWidth);
  for (const auto& [x, y] : points) {
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"steelblue\"/>\n", kLeft + kWidth * x / x_hi,
                       kTop + kHeight * (1 - y / y_hi));
  }
  return out + "</svg>\n";
}

std::string heatmap_svg(std::string_view title, std::string_view run_id, std::string_view x_label,
                        std::string_view y_label, const Histogram2D& h) {
  auto out = svg_open(title, run_id, x_label, y_label);
  std::size_t peak = 0;
  for (auto c : h.counts) peak = std::max(peak, c);
  const double cw = kWidth / h.nx;
  const double ch = kHeight / h.ny;
  for (std::size_t ix = 0; ix < h.nx; ++ix) {
    for (std::size_t iy = 0; iy < h.ny; ++iy) {
      const auto c = h.at(ix, iy);
      if (c == 0) continue;
      const int shade = 255 - static_cast<int>(std::lround(225.0 * std::sqrt(static_cast<double>(c) / peak)));
      out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"rgb({},{},255)\"/>\n",
                         kLeft + ix * cw, kTop + kHeight - (iy + 1) * ch, cw, ch, shade, shade);
    }
  }
  out += svg_axes(h.x_lo, h.x_lo + h.nx * h.width, h.y_lo, h.y_lo + h.ny * h.width);
  return out + "</svg>\n";
}

std::vector<BeliefTrace> read_trace_file(const fs::path& path) {
  std::vector<BeliefTrace> out;
  for (const auto& j : read_jsonl(path)) out.push_back(trace_from_record(j));
  return out;
}

}  // namespace

// ---- scoring -------------------------------------------------------------------

std::vector<ReportCell> score_traces(std::span<const BeliefTrace> traces, std::span<const Setup> setups,
                                     std::span<const Problem> problems, PairingMode mode) {
  std::map<std::string, const Setup*> setup_by_digest;
  for (const auto& s : setups) setup_by_digest[s.digest()] = &s;
  std::map<std::string, const Problem*> problem_by_id;
  for (const auto& p : problems) problem_by_id[p.id] = &p;

  std::map<std::string, std::vector<const BeliefTrace*>> groups;
  for (const auto& t : traces) {
    if (!setup_by_digest.count(t.setup_digest)) {
      throw Error(ErrorKind::invalid_record, fmt::format("trace of {} refers to unknown setup {}", t.problem_id,
                                                         t.setup_digest));
    }
    if (!problem_by_id.count(t.problem_id)) {
      throw Error(ErrorKind::invalid_record, fmt::format("trace refers to unknown problem {}", t.problem_id));
    }
    groups[t.setup_digest].push_back(&t);
  }

  std::vector<ReportCell> cells;
  for (const auto& [digest, group] : groups) {
    ReportCell cell;
    cell.setup = *setup_by_digest.at(digest);
    cell.setup_digest = digest;
    std::set<std::string> problem_ids;
    bool labeled = true;
    std::vector<double> finals;
    std::vector<int> outcomes;
    for (const auto* t : group) {
      problem_ids.insert(t->problem_id);
      auto pairs = make_belief_pairs(*t, mode);
      cell.pairs.insert(cell.pairs.end(), pairs.begin(), pairs.end());
      const auto& truth = problem_by_id.at(t->problem_id)->ground_truth;
      if (truth) {
        auto errors = absolute_error_pairs(*t, truth);
        cell.error_pairs.insert(cell.error_pairs.end(), errors.begin(), errors.end());
        finals.push_back(t->beliefs.back());
        outcomes.push_back(*truth);
      } else {
        labeled = false;
      }
    }
    cell.n_problems = problem_ids.size();
    if (labeled && !finals.empty()) cell.brier = stats::brier_score(finals, outcomes);
    if (cell.pairs.size() < 3) {
      cell.status = kInsufficientData;
    } else {
      try {
        cell.martingale = stats::martingale_score(cell.pairs, mode);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::degenerate_regressor) throw;
        cell.status = kDegenerate;
      }
    }
    cells.push_back(std::move(cell));
  }
  std::sort(cells.begin(), cells.end(), [](const ReportCell& a, const ReportCell& b) {
    return std::make_pair(setup_key(a.setup), a.setup_digest) < std::make_pair(setup_key(b.setup), b.setup_digest);
  });
  return cells;
}

std::vector<ReportCell> score_run(const RunStore& store, PairingMode mode) {
  const auto traces = store.read_traces();
  if (traces.empty()) throw Error(ErrorKind::no_samples, fmt::format("run {} has no judged traces", store.run_id()));
  return score_traces(traces, store.read_setups(), store.read_problems(), mode);
}

// ---- densities -----------------------------------------------------------------

void Histogram2D::add(double x, double y) {
  counts[bin(x, x_lo, width, nx) * ny + bin(y, y_lo, width, ny)] += 1;
}

std::size_t Histogram2D::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

Histogram2D belief_density(std::span<const BeliefPair> pairs) {
  Histogram2D h;
  for (const auto& p : pairs) h.add(p.b_prior, p.delta_b);
  return h;
}

Histogram2D error_density(std::span<const ErrorPair> pairs) {
  Histogram2D h;
  for (const auto& p : pairs) h.add(p.prior_error, p.delta_error);
  return h;
}

// ---- report files --------------------------------------------------------------

ordered_json to_json(const ReportCell& cell) {
  ordered_json j;
  j["setup_digest"] = cell.setup_digest;
  j["setup"] = to_record(cell.setup);
  j["status"] = cell.status;
  j["cell"] = cell_text(cell);
  j["martingale"] = cell.martingale ? stats::to_json(*cell.martingale) : ordered_json(nullptr);
  j["brier"] = cell.brier ? ordered_json(*cell.brier) : ordered_json(nullptr);
  j["n_problems"] = cell.n_problems;
  j["n_pairs"] = cell.pairs.size();
  return j;
}

std::vector<fs::path> emit_reports(std::span<const ReportCell> cells, const fs::path& out_dir,
                                   std::string_view run_id) {
  if (cells.empty()) throw Error(ErrorKind::no_samples, "no cells to report");
  std::vector<fs::path> written;
  auto put = [&](std::string_view name, std::string_view text) {
    write_file_atomic(out_dir / name, text);
    written.push_back(out_dir / name);
  };

  // grid.md: rows are model / technique / prompt / judge, columns are domains.
  std::set<std::string> domains;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::map<std::string, std::string>> rows;
  for (const auto& c : cells) {
    const auto domain = std::string(to_string(c.setup.domain_tag));
    domains.insert(domain);
    rows[{c.setup.model_id, std::string(to_string(c.setup.technique)), std::string(to_string(c.setup.prompt_condition)),
          c.setup.judge_model_id}][domain] = cell_text(c);
  }
  std::string md = fmt::format("# Martingale Score grid\n\nrun_id: {}\n\n", run_id);
  md += "Entries marked * are significant at p < 0.05.\n\n| model | technique | prompt | judge |";
  for (const auto& d : domains) md += fmt::format(" {} |", d);
  md += "\n|---|---|---|---|";
  for (std::size_t i = 0; i < domains.size(); ++i) md += "---:|";
  md += "\n";
  for (const auto& [key, by_domain] : rows) {
    const auto& [model, technique, prompt, judge] = key;
    md += fmt::format("| {} | {} | {} | {} |", model, technique, prompt, judge);
    for (const auto& d : domains) {
      auto it = by_domain.find(d);
      md += fmt::format(" {} |", it == by_domain.end() ? "" : it->second);
    }
    md += "\n";
  }
  put("grid.md", md);

  std::string grid = "setup_digest,model,technique,prompt,domain,judge,status,cell,slope,intercept,se_slope,t_stat,"
                     "p_value,n_pairs,n_problems,brier,run_id\n";
  std::string scatter = "setup_digest,model,technique,prompt,domain,judge,abs_martingale,martingale,brier,run_id\n";
  std::vector<std::pair<double, double>> points;
  for (const auto& c : cells) {
    const auto& s = c.setup;
    const auto fields = fmt::format("{},{},{},{},{},{}", c.setup_digest, csv_field(s.model_id), to_string(s.technique),
                                    to_string(s.prompt_condition), to_string(s.domain_tag),
                                    csv_field(s.judge_model_id));
    const auto brier = c.brier ? real(*c.brier) : std::string();
    if (c.martingale) {
      const auto& o = c.martingale->ols;
      grid += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", fields, c.status, cell_text(c), real(o.slope),
                          real(o.intercept), real(o.se_slope), real(o.t_stat), real(o.p_value), c.pairs.size(),
                          c.n_problems, brier, run_id);
      if (c.brier) {
        scatter += fmt::format("{},{},{},{},{}\n", fields, real(std::fabs(o.slope)), real(o.slope), brier, run_id);
        points.emplace_back(std::fabs(o.slope), *c.brier);
      }
    } else {
      grid += fmt::format("{},{},{},,,,,,{},{},{},{}\n", fields, c.status, c.status, c.pairs.size(), c.n_problems,
                          brier, run_id);
    }
  }
  put("grid.csv", grid);
  put("scatter.csv", scatter);

  std::vector<BeliefPair> all_pairs;
  std::vector<ErrorPair> all_errors;
  std::vector<std::pair<std::string, Histogram2D>> belief_scopes{{"all", {}}};
  std::vector<std::pair<std::string, Histogram2D>> error_scopes{{"all", {}}};
  for (const auto& c : cells) {
    all_pairs.insert(all_pairs.end(), c.pairs.begin(), c.pairs.end());
    all_errors.insert(all_errors.end(), c.error_pairs.begin(), c.error_pairs.end());
    belief_scopes.emplace_back(c.setup_digest, belief_density(c.pairs));
    if (!c.error_pairs.empty()) error_scopes.emplace_back(c.setup_digest, error_density(c.error_pairs));
  }
  belief_scopes.front().second = belief_density(all_pairs);
  error_scopes.front().second = error_density(all_errors);
  put("density_belief.csv", density_csv(run_id, belief_scopes));
  put("density_error.csv", density_csv(run_id, error_scopes));

  stats::write_pairs_csv(out_dir / "pairs.csv", all_pairs, run_id);
  written.push_back(out_dir / "pairs.csv");

  ordered_json doc;
  doc["run_id"] = run_id;
  doc["cells"] = ordered_json::array();
  for (const auto& c : cells) doc["cells"].push_back(to_json(c));
  put("cells.json", doc.dump(2) + "\n");

  put("scatter.svg", scatter_svg(run_id, points));
  put("density_belief.svg", heatmap_svg("Belief update against prior belief", run_id, "b_prior", "delta b",
                                        belief_scopes.front().second));
  put("density_error.svg", heatmap_svg("Error change against prior error", run_id, "|b_prior - b*|",
                                       "delta |b - b*|", error_scopes.front().second));
  return written;
}

// ---- attribution and agreement -------------------------------------------------

stats::AttributionReport attribute_run(const RunStore& store, const std::map<stats::Factor, std::string>& baselines,
                                       PairingMode mode) {
  const auto setups = store.read_setups();
  std::map<std::string, Setup> by_digest;
  for (const auto& s : setups) by_digest[s.digest()] = s;
  std::vector<std::pair<BeliefPair, Setup>> data;
  for (const auto& t : store.read_traces()) {
    auto it = by_digest.find(t.setup_digest);
    if (it == by_digest.end()) throw Error(ErrorKind::invalid_record, fmt::format("unknown setup {}", t.setup_digest));
    for (auto& p : make_belief_pairs(t, mode)) data.emplace_back(std::move(p), it->second);
  }
  for (const auto& [factor, level] : baselines) {
    std::set<std::string> levels;
    for (const auto& [pair, setup] : data) levels.insert(stats::factor_level(setup, factor));
    if (levels.size() < 2) {
      throw Error(ErrorKind::single_level_factor,
                  fmt::format("{} has {} level(s) in run {}", stats::to_string(factor), levels.size(), store.run_id()));
    }
  }
  auto report = stats::attribute_factors(data, baselines);

  ordered_json j;
  j["run_id"] = store.run_id();
  j["pairing"] = to_string(mode);
  j["attribution"] = stats::to_json(report);
  write_file_atomic(store.report_dir() / "attribution.json", j.dump(2) + "\n");

  std::string md = fmt::format("# Factor attribution\n\nrun_id: {}\n\nBaselines:", store.run_id());
  for (const auto& [f, l] : report.baseline_levels) md += fmt::format(" {}={}", f, l);
  md += fmt::format("\n\nn = {} pairs. Intervals are 95% normal-approximation.\n\n", report.n);
  md += "| term | factor | level | coefficient | CI low | CI high |\n|---|---|---|---:|---:|---:|\n";
  auto row = [&](std::string_view term, const stats::AttributionTerm& t) {
    md += fmt::format("| {} | {} | {} | {:+.4f} | {:+.4f} | {:+.4f} |\n", term, t.factor, t.level, t.coefficient,
                      t.ci_low, t.ci_high);
  };
  row("slope", report.slope_baseline);
  for (const auto& t : report.slope_terms) row("slope", t);
  row("intercept", report.intercept_baseline);
  for (const auto& t : report.intercept_terms) row("intercept", t);
  write_file_atomic(store.report_dir() / "attribution.md", md);
  return report;
}

stats::AgreementReport agreement_between(const fs::path& traces_a, const fs::path& traces_b) {
  const auto a = read_trace_file(traces_a);
  const auto b = read_trace_file(traces_b);
  const auto paired = pipeline::judge_pairing(a, b);
  const auto judge_a = a.empty() ? std::string() : a.front().judge_model_id;
  const auto judge_b = b.empty() ? std::string() : b.front().judge_model_id;
  return stats::agreement(judge_a, judge_b, paired.a, paired.b);
}

// ---- verify --------------------------------------------------------------------

VerifyReport verify(const fs::path& out_dir) {
  VerifyReport report;
  if (!fs::is_directory(out_dir)) {
    report.issues.push_back(fmt::format("{} is not a directory", out_dir.string()));
    return report;
  }
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(out_dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());

  for (const auto& entry : entries) {
    const auto name = entry.filename().string();
    if (!fs::is_directory(entry)) {
      report.issues.push_back(fmt::format("{}: stray file outside any run", name));
      continue;
    }
    if (!fs::exists(entry / "manifest.json")) {
      report.issues.push_back(fmt::format("{}: orphan directory without manifest", name));
      continue;
    }
    std::optional<RunStore> store;
    try {
      store = RunStore::open(entry);
    } catch (const Error& e) {
      report.issues.push_back(fmt::format("{}: {}", name, e.what()));
      continue;
    }
    ++report.runs;
    std::set<std::string> problems;
    std::set<std::string> setups;
    std::vector<fs::path> files;
    for (const auto& f : fs::recursive_directory_iterator(entry)) {
      if (f.is_regular_file()) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());

    auto check_records = [&](const fs::path& file) -> std::vector<json> {
      std::vector<json> records;
      try {
        auto raw = read_jsonl(file);
        for (std::size_t i = 0; i < raw.size(); ++i) {
          records.push_back(store->unwrap(std::move(raw[i]), file.filename().string(), i + 1));
        }
      } catch (const Error& e) {
        report.issues.push_back(fmt::format("{}: {}", name, e.what()));
      }
      report.records += records.size();
      return records;
    };
    if (fs::exists(entry / "problems.jsonl")) {
      for (const auto& r : check_records(entry / "problems.jsonl")) problems.insert(r.value("id", ""));
    }
    if (fs::exists(entry / "setups.jsonl")) {
      for (const auto& r : check_records(entry / "setups.jsonl")) setups.insert(r.value("digest", ""));
    }

    for (const auto& file : files) {
      const auto rel = fs::relative(file, entry).generic_string();
      const auto fname = file.filename().string();
      if (fname.find(".tmp.") != std::string::npos) {
        report.issues.push_back(fmt::format("{}/{}: leftover temporary file", name, rel));
        continue;
      }
      if (rel == "manifest.json" || rel == "problems.jsonl" || rel == "setups.jsonl") continue;
      if (file.extension() == ".jsonl") {
        const auto records = check_records(file);
        if (fname.rfind("traces", 0) != 0) continue;
        std::set<std::pair<std::string, std::string>> seen;
        for (const auto& r : records) {
          const auto pid = r.value("problem_id", "");
          const auto digest = r.value("setup_digest", "");
          if (!problems.count(pid)) {
            report.issues.push_back(fmt::format("{}/{}: orphan trace for unknown problem {}", name, rel, pid));
          }
          if (!setups.count(digest)) {
            report.issues.push_back(fmt::format("{}/{}: orphan trace for unknown setup {}", name, rel, digest));
          }
          if (!seen.insert({pid, digest}).second) {
            report.issues.push_back(fmt::format("{}/{}: ({}, {}) traced twice", name, rel, pid, digest));
          }
        }
      } else {
        std::ifstream in(file, std::ios::binary);
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        // a header-only CSV has no rows to tag
        const bool header_only = file.extension() == ".csv" && text.find('\n') + 1 >= text.size();
        if (!header_only && text.find(store->run_id()) == std::string::npos) {
          report.issues.push_back(fmt::format("{}/{}: does not carry run_id", name, rel));
        }
      }
    }
  }
  return report;
}

}  // namespace mscore::harness
