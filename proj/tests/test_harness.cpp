#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/records.hpp"
#include "mscore/stats.hpp"

using namespace mscore;
using namespace mscore::harness;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(std::string_view tag) {
    static int counter = 0;
    path = fs::temp_directory_path() / fmt::format("mscore-{}-{}-{}", tag, ::getpid(), counter++);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write(const fs::path& p, std::string_view text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io_error;
}

template <typename Fn>
std::string message_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

Problem problem(std::string id, std::optional<int> truth) {
  Problem p;
  p.id = std::move(id);
  p.statement = "Will it happen?";
  p.option_yes = "Yes";
  p.option_no = "No";
  p.domain_tag = DomainTag::forecasting;
  p.ground_truth = truth;
  return p;
}

Setup setup(std::string model, Technique technique = Technique::cot) {
  return Setup{std::move(model), PromptCondition::none, technique, DomainTag::forecasting, "judge-x"};
}

BeliefTrace trace(const std::string& pid, const Setup& s, std::vector<double> beliefs) {
  BeliefTrace t;
  t.problem_id = pid;
  t.setup_digest = s.digest();
  t.technique = s.technique;
  t.judge_model_id = s.judge_model_id;
  t.beliefs = std::move(beliefs);
  for (std::size_t i = 0; i + 1 < t.beliefs.size(); ++i) t.steps.push_back({i, Speaker::reasoner, "step"});
  return t;
}

}  // namespace

TEST_CASE("forecasting csv rows map resolution to ground truth") {
  TempDir dir("csv");
  write(dir.path / "q.csv",
        "id,question,resolution,background\n"
        "f1,Will A happen?,YES,Some context\n"
        "f2,Will B happen?,no,\n"
        "f3,Will C happen?,,\n");
  const auto problems = load_problems(dir.path / "q.csv", InputFormat::forecasting_csv);
  REQUIRE(problems.size() == 3);
  CHECK(problems[0].ground_truth == 1);
  CHECK(problems[1].ground_truth == 0);
  CHECK_FALSE(problems[2].ground_truth.has_value());
  CHECK(problems[0].option_yes == "Yes");
  REQUIRE(problems[0].extra_info.size() == 1);
  CHECK(problems[0].extra_info[0].name == "background");
  CHECK(problems[1].extra_info.empty());
  CHECK(problems[0].domain_tag == DomainTag::forecasting);

  write(dir.path / "bad.csv", "id,question,resolution\nf1,Q?,yes\nf2,Q?,maybe\n");
  const auto msg = message_of([&] { load_problems(dir.path / "bad.csv", InputFormat::forecasting_csv); });
  CHECK(msg.find("row") != std::string::npos);
  CHECK(msg.find("maybe") != std::string::npos);
  CHECK(kind_of([&] { load_problems(dir.path / "bad.csv", InputFormat::forecasting_csv); }) == ErrorKind::malformed_row);
}

TEST_CASE("duplicate ids are rejected by name") {
  TempDir dir("dup");
  write(dir.path / "q.csv", "id,question\nx1,Q one?\nx2,Q two?\nx1,Q three?\n");
  CHECK(kind_of([&] { load_problems(dir.path / "q.csv", InputFormat::forecasting_csv); }) == ErrorKind::duplicate_id);
  CHECK(message_of([&] { load_problems(dir.path / "q.csv", InputFormat::forecasting_csv); }).find("x1") !=
        std::string::npos);
}

TEST_CASE("cmv posts carry no ground truth") {
  TempDir dir("cmv");
  write(dir.path / "cmv.jsonl", R"({"id":"c1","title":"CMV: tabs beat spaces","body":"Because."})" "\n");
  const auto problems = load_problems(dir.path / "cmv.jsonl", InputFormat::cmv_export);
  REQUIRE(problems.size() == 1);
  CHECK_FALSE(problems[0].ground_truth.has_value());
  CHECK(problems[0].statement == "CMV: tabs beat spaces\n\nBecause.");
  CHECK(problems[0].option_yes == kCmvYes);
  CHECK(problems[0].domain_tag == DomainTag::changemyview);

  write(dir.path / "broken.jsonl", "{\"id\":\"c1\",\"title\":\"ok\"}\nnot json\n");
  CHECK(message_of([&] { load_problems(dir.path / "broken.jsonl", InputFormat::cmv_export); }).find("line 2") !=
        std::string::npos);
}

TEST_CASE("openreview submissions become area-chair questions") {
  const auto s = build_openreview_statement("ICLR 2024", "Title: A submission");
  CHECK(s.find("the bar of ICLR 2024") != std::string::npos);
  CHECK(s.find("Title: A submission") != std::string::npos);
  CHECK(kind_of([] { build_openreview_statement("", "Title: x"); }) == ErrorKind::empty_submission);
  CHECK(kind_of([] { build_openreview_statement("ICLR 2024", "  "); }) == ErrorKind::empty_submission);

  TempDir dir("or");
  write(dir.path / "or.jsonl",
        R"j({"id":"o1","venue":"ICLR 2024","abstract":"We study things.","decision":"Accept (poster)"})j" "\n"
        R"({"id":"o2","venue":"ICLR 2024","title":"T","reviews":["r1","r2"],"rebuttals":["b1"],"decision":"Reject"})"
        "\n");
  const auto problems = load_problems(dir.path / "or.jsonl", InputFormat::openreview_export);
  REQUIRE(problems.size() == 2);
  REQUIRE(problems[0].extra_info.size() == 1);
  CHECK(problems[0].extra_info[0].name == "abstract");
  CHECK(problems[0].ground_truth == 1);
  CHECK(problems[0].option_yes == "ACCEPTED");
  CHECK(problems[0].option_no == "REJECTED");
  CHECK(problems[1].ground_truth == 0);
  CHECK(problems[1].extra_info.size() == 3);
  CHECK(problems[1].extra_info[2].name == "rebuttal 1");
}

TEST_CASE("unknown input format") {
  CHECK(kind_of([] { parse_input_format("xml"); }) == ErrorKind::unknown_format);
  CHECK(parse_input_format("cmv_export") == InputFormat::cmv_export);
}

TEST_CASE("scoring closed-form fixture gives slope one third") {
  const auto s = setup("m");
  std::vector<Problem> problems{problem("p1", 0), problem("p2", 1), problem("p3", 0)};
  std::vector<BeliefTrace> traces{trace("p1", s, {0.2, 0.1}), trace("p2", s, {0.8, 0.9}), trace("p3", s, {0.2, 0.1})};
  const std::vector<Setup> setups{s};
  const auto cells = score_traces(traces, setups, problems, PairingMode::per_step);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].status == "ok");
  CHECK(cells[0].martingale->ols.slope == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(cells[0].n_problems == 3);
  REQUIRE(cells[0].brier.has_value());
  CHECK(*cells[0].brier == doctest::Approx((0.01 + 0.01 + 0.01) / 3));
  CHECK(cells[0].error_pairs.size() == 3);
}

TEST_CASE("two single-step trajectories are insufficient data") {
  const auto s = setup("m");
  std::vector<Problem> problems{problem("p1", 0), problem("p2", 1)};
  std::vector<BeliefTrace> traces{trace("p1", s, {0.2, 0.1}), trace("p2", s, {0.8, 0.9})};
  const std::vector<Setup> setups{s};
  const auto cells = score_traces(traces, setups, problems, PairingMode::per_step);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].status == kInsufficientData);
  CHECK_FALSE(cells[0].martingale.has_value());
  CHECK(cells[0].pairs.size() == 2);
}

TEST_CASE("constant traces score zero with p one") {
  const auto s = setup("m");
  std::vector<Problem> problems{problem("p1", 0), problem("p2", 1)};
  std::vector<BeliefTrace> traces{trace("p1", s, {0.3, 0.3, 0.3}), trace("p2", s, {0.6, 0.6, 0.6})};
  const std::vector<Setup> setups{s};
  const auto cells = score_traces(traces, setups, problems, PairingMode::per_step);
  REQUIRE(cells[0].status == "ok");
  CHECK(cells[0].martingale->ols.slope == 0.0);
  CHECK(cells[0].martingale->ols.p_value == 1.0);
  CHECK(*cells[0].brier == doctest::Approx((0.09 + 0.16) / 2).epsilon(1e-12));
}

TEST_CASE("brier needs every label and unknown references fail") {
  const auto s = setup("m");
  std::vector<Problem> problems{problem("p1", 0), problem("p2", std::nullopt), problem("p3", 1)};
  std::vector<BeliefTrace> traces{trace("p1", s, {0.2, 0.3, 0.1}), trace("p2", s, {0.8, 0.9, 0.7}),
                                  trace("p3", s, {0.5, 0.6, 0.9})};
  const std::vector<Setup> setups{s};
  const auto cells = score_traces(traces, setups, problems, PairingMode::per_step);
  CHECK_FALSE(cells[0].brier.has_value());
  CHECK(cells[0].error_pairs.size() == 4);

  traces.push_back(trace("ghost", s, {0.1, 0.2}));
  CHECK(kind_of([&] { score_traces(traces, setups, problems, PairingMode::per_step); }) == ErrorKind::invalid_record);
}

TEST_CASE("endpoint pairing uses one pair per trace") {
  const auto s = setup("m");
  std::vector<Problem> problems{problem("p1", 0), problem("p2", 1), problem("p3", 1)};
  std::vector<BeliefTrace> traces{trace("p1", s, {0.2, 0.3, 0.1}), trace("p2", s, {0.8, 0.9, 0.7}),
                                  trace("p3", s, {0.5, 0.6, 0.9})};
  const std::vector<Setup> setups{s};
  const auto cells = score_traces(traces, setups, problems, PairingMode::endpoint);
  CHECK(cells[0].pairs.size() == 3);
  CHECK(cells[0].martingale->mode == PairingMode::endpoint);
}

TEST_CASE("density bins") {
  Histogram2D h;
  h.add(0.0, -1.0);
  h.add(1.0, 1.0);
  h.add(0.15, 0.0);
  h.add(0.049999, -0.95);
  CHECK(h.at(0, 0) == 1);
  CHECK(h.at(19, 39) == 1);
  CHECK(h.at(3, 20) == 1);
  CHECK(h.at(0, 1) == 1);
  CHECK(h.total() == 4);
}

TEST_CASE("reports: stars, scatter exclusion, conservation and run ids") {
  const auto labeled = setup("labeled");
  const auto unlabeled = setup("unlabeled");
  std::vector<Problem> problems{problem("p1", 0), problem("p2", 1), problem("p3", 0), problem("u1", std::nullopt),
                                problem("u2", std::nullopt), problem("u3", std::nullopt)};
  std::vector<BeliefTrace> traces{
      trace("p1", labeled, {0.2, 0.1}),        trace("p2", labeled, {0.8, 0.9}),
      trace("p3", labeled, {0.2, 0.1}),        trace("u1", unlabeled, {0.4, 0.5, 0.35}),
      trace("u2", unlabeled, {0.7, 0.6, 0.8}), trace("u3", unlabeled, {0.1, 0.3, 0.2}),
  };
  const std::vector<Setup> setups{labeled, unlabeled};
  const auto cells = score_traces(traces, setups, problems, PairingMode::per_step);
  REQUIRE(cells.size() == 2);

  TempDir dir("report");
  const auto files = emit_reports(cells, dir.path, "run-test");
  CHECK(files.size() == 10);
  for (const auto& f : files) CHECK_MESSAGE(slurp(f).find("run-test") != std::string::npos, f.string());

  const auto grid = slurp(dir.path / "grid.md");
  CHECK(grid.find("+0.3333*") != std::string::npos);
  const auto grid_csv = slurp(dir.path / "grid.csv");
  CHECK(grid_csv.find(labeled.digest()) != std::string::npos);
  CHECK(grid_csv.find(unlabeled.digest()) != std::string::npos);
  const auto scatter = slurp(dir.path / "scatter.csv");
  CHECK(scatter.rfind("setup_digest,model,technique,prompt,domain,judge,abs_martingale", 0) == 0);
  CHECK(scatter.find(labeled.digest()) != std::string::npos);
  CHECK(scatter.find(unlabeled.digest()) == std::string::npos);

  // "all" bins sum to the number of pairs
  std::istringstream density(slurp(dir.path / "density_belief.csv"));
  std::string line;
  std::getline(density, line);
  std::size_t total = 0;
  std::size_t rows = 0;
  while (std::getline(density, line)) {
    if (line.rfind("all,", 0) != 0) continue;
    ++rows;
    auto fields = line;
    const auto last = fields.rfind(',');
    const auto prev = fields.rfind(',', last - 1);
    total += std::stoul(fields.substr(prev + 1, last - prev - 1));
  }
  CHECK(rows == 20 * 40);
  CHECK(total == 3 + 6);

  const auto pairs = stats::read_pairs_csv(dir.path / "pairs.csv");
  CHECK(pairs.size() == 9);

  const auto cells_json = json::parse(slurp(dir.path / "cells.json"));
  CHECK(cells_json["run_id"] == "run-test");
  CHECK(cells_json["cells"].size() == 2);

  CHECK(kind_of([&] { emit_reports({}, dir.path, "run-test"); }) == ErrorKind::no_samples);
}

TEST_CASE("star appears exactly when p is below 0.05") {
  ReportCell cell;
  cell.setup = setup("m");
  cell.setup_digest = cell.setup.digest();
  stats::MartingaleReport m;
  m.ols.slope = 0.0671;
  m.ols.p_value = 0.03;
  cell.martingale = m;
  CHECK(to_json(cell)["cell"] == "+0.0671*");
  cell.martingale->ols.p_value = 0.05;
  CHECK(to_json(cell)["cell"] == "+0.0671");
}

namespace {

// Problems p0..p(n-1); setup A (cot) moves with slope 0.05, setup B (debate)
// with slope 0.15, no intercept and no noise.
RunStore two_slope_run(const fs::path& out, std::size_t n) {
  RunStore store(out, "run-attr");
  const auto a = setup("m", Technique::cot);
  const auto b = setup("m", Technique::debate);
  std::vector<Problem> problems;
  std::vector<BeliefTrace> traces;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = fmt::format("p{}", i);
    problems.push_back(problem(id, static_cast<int>(i % 2)));
    const double b0 = 0.1 + 0.8 * static_cast<double>(i) / static_cast<double>(n);
    traces.push_back(trace(id, a, {b0, b0 + 0.05 * b0}));
    traces.push_back(trace(id, b, {b0, b0 + 0.15 * b0}));
  }
  store.write_problems(problems);
  const std::vector<Setup> setups{a, b};
  store.write_setups(setups);
  store.write_traces(traces);
  store.update_manifest(ordered_json{{"run_id", "run-attr"}}, "test", ordered_json::object());
  return store;
}

}  // namespace

TEST_CASE("attribution over a run") {
  TempDir dir("attr");
  const auto store = two_slope_run(dir.path, 12);
  const auto report = attribute_run(store, {{stats::Factor::technique, "cot"}}, PairingMode::per_step);
  CHECK(report.slope_baseline.coefficient == doctest::Approx(0.05).epsilon(1e-10));
  REQUIRE(report.slope_terms.size() == 1);
  CHECK(report.slope_terms[0].level == "debate");
  CHECK(report.slope_terms[0].coefficient == doctest::Approx(0.10).epsilon(1e-10));
  CHECK(fs::exists(store.report_dir() / "attribution.json"));
  CHECK(slurp(store.report_dir() / "attribution.md").find("debate") != std::string::npos);

  CHECK(kind_of([&] { attribute_run(store, {{stats::Factor::prompt, "none"}}, PairingMode::per_step); }) ==
        ErrorKind::single_level_factor);
}

TEST_CASE("run store round trip and run id checks") {
  TempDir dir("store");
  const auto store = two_slope_run(dir.path, 4);
  const auto reopened = RunStore::open(store.dir());
  CHECK(reopened.run_id() == "run-attr");
  CHECK(reopened.read_traces().size() == 8);
  CHECK(reopened.read_problems().size() == 4);
  CHECK(kind_of([&] { RunStore(dir.path, "../escape"); }) == ErrorKind::invalid_config);

  // a record from another run is rejected
  auto text = slurp(store.dir() / "problems.jsonl");
  text.replace(text.find("run-attr"), 8, "run-else");
  write(store.dir() / "problems.jsonl", text);
  CHECK(kind_of([&] { reopened.read_problems(); }) == ErrorKind::invalid_record);
}

TEST_CASE("verify finds orphans and stray files") {
  TempDir dir("verify");
  const auto store = two_slope_run(dir.path, 4);
  auto report = verify(dir.path);
  CHECK_MESSAGE(report.ok(), (report.issues.empty() ? "" : report.issues.front()));
  CHECK(report.runs == 1);
  CHECK(report.records == 4 + 2 + 8);

  auto traces = slurp(store.dir() / "traces.jsonl");
  traces += R"({"run_id":"run-attr","problem_id":"nobody","setup_digest":"0000000000000000","technique":"cot",)"
            R"("judge_model_id":"j","beliefs":[0.5,0.5],"steps":[{"index":0,"speaker":"reasoner","text":"s"}],)"
            R"("warnings":[],"seed":0})"
            "\n";
  write(store.dir() / "traces.jsonl", traces);
  fs::create_directories(dir.path / "lost");
  write(dir.path / "notes.txt", "x");
  report = verify(dir.path);
  CHECK_FALSE(report.ok());
  auto has = [&](std::string_view needle) {
    for (const auto& i : report.issues) {
      if (i.find(needle) != std::string::npos) return true;
    }
    return false;
  };
  CHECK(has("unknown problem nobody"));
  CHECK(has("unknown setup 0000000000000000"));
  CHECK(has("lost: orphan directory"));
  CHECK(has("notes.txt: stray file"));
}

TEST_CASE("config parsing") {
  const auto c = parse_config(json::parse(R"({
    "seed": 7,
    "grid": {"models": ["a", "b"], "techniques": ["cot", "debate"], "prompts": ["none"], "judge": "j"},
    "backends": {"offline": {"kind": "mock"}},
    "temperatures": {"a": 0.5}
  })"),
                              "/tmp");
  CHECK(c.setups.size() == 4);
  CHECK(c.default_backend == "offline");
  CHECK(c.backends.at("offline").mock_seed == 7);
  CHECK(c.temperatures.at("a") == 0.5);
  CHECK(derive_run_id(c) == derive_run_id(c));
  CHECK(derive_run_id(c).rfind("run-", 0) == 0);

  CHECK(kind_of([] { parse_config(json::parse(R"({"sed": 1})"), "/tmp"); }) == ErrorKind::invalid_config);
  CHECK(kind_of([] { parse_config(json::parse(R"({"setups": [{"model": "a"}]})"), "/tmp"); }) ==
        ErrorKind::invalid_config);
  CHECK(kind_of([] {
          parse_config(json::parse(R"({"backends": {"x": {"kind": "ftp"}}})"), "/tmp");
        }) == ErrorKind::invalid_config);
  CHECK(kind_of([] { parse_config(json::parse(R"({"datasets": [{"path": "d", "format": "xml"}]})"), "/tmp"); }) ==
        ErrorKind::invalid_config);
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::invalid_config) == 2);
  CHECK(exit_code(ErrorKind::rate_limited_exhausted) == 3);
  CHECK(exit_code(ErrorKind::auth_failure) == 3);
  CHECK(exit_code(ErrorKind::malformed_row) == 4);
}

TEST_CASE("http backend without credential is a config error") {
  ::unsetenv("MSCORE_TEST_NO_SUCH_KEY");
  const auto c = parse_config(json::parse(R"({
    "backends": {"api": {"kind": "http", "endpoint": "http://127.0.0.1:9", "credential_env": "MSCORE_TEST_NO_SUCH_KEY"}}
  })"),
                              "/tmp");
  CHECK(kind_of([&] { Backends b(c); }) == ErrorKind::invalid_config);
}

namespace {

std::string canonical_problems(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = problem(fmt::format("q{:02d}", i), i % 3 == 0 ? std::optional<int>() : std::optional<int>(i % 2));
    p.statement = fmt::format("Will event {} happen before the deadline?", i);
    if (i % 4 == 0) p.extra_info.push_back({"background", fmt::format("Context for event {}.", i)});
    out += to_line(to_record(p)) + "\n";
  }
  return out;
}

std::map<std::string, std::string> full_run(const fs::path& root) {
  write(root / "problems.jsonl", canonical_problems(20));
  write(root / "config.json", R"({
    "seed": 11,
    "parallel": 2,
    "datasets": [{"path": "problems.jsonl"}],
    "grid": {"models": ["mock-a"], "techniques": ["cot", "debate"], "prompts": ["none", "critical_thinking"],
             "judge": "mock-judge"},
    "backends": {"offline": {"kind": "mock"}},
    "debate_rounds": 2
  })");
  const auto config = load_config(root / "config.json");
  RunStore store(config.out_dir, derive_run_id(config));
  Backends backends(config);
  const auto generated = generate(config, store, backends);
  CHECK(generated.produced == 80);
  CHECK(generated.failed == 0);
  const auto judged = judge(config, store, backends);
  CHECK(judged.produced == 80);

  const auto trajectories = store.read_trajectories();
  const auto traces = store.read_traces();
  REQUIRE(trajectories.size() == traces.size());
  std::map<std::pair<std::string, std::string>, std::size_t> steps;
  for (const auto& t : trajectories) steps[{t.problem_id, t.setup.digest()}] = t.steps.size();
  for (const auto& t : traces) CHECK(t.beliefs.size() == steps.at({t.problem_id, t.setup_digest}) + 1);

  const auto cells = score_run(store, config.pairing);
  CHECK(cells.size() == 4);
  emit_reports(cells, store.report_dir(), store.run_id());
  const auto verified = verify(config.out_dir);
  CHECK_MESSAGE(verified.ok(), (verified.issues.empty() ? "" : verified.issues.front()));

  std::map<std::string, std::string> files;
  for (const auto& f : fs::directory_iterator(store.report_dir())) files[f.path().filename().string()] = slurp(f.path());
  return files;
}

}  // namespace

TEST_CASE("mock end-to-end runs are byte-identical") {
  TempDir one("e2e1");
  TempDir two("e2e2");
  const auto a = full_run(one.path);
  const auto b = full_run(two.path);
  CHECK(a.size() == 10);
  CHECK(a == b);
}

TEST_CASE("second judge writes a separate trace file") {
  TempDir dir("judge2");
  write(dir.path / "problems.jsonl", canonical_problems(6));
  write(dir.path / "config.json", R"({
    "run_id": "two-judges",
    "datasets": [{"path": "problems.jsonl"}],
    "setups": [{"model": "mock-a", "judge": "mock-judge"}],
    "backends": {"offline": {"kind": "mock"}}
  })");
  const auto config = load_config(dir.path / "config.json");
  RunStore store(config.out_dir, derive_run_id(config));
  Backends backends(config);
  generate(config, store, backends);
  judge(config, store, backends);
  judge(config, store, backends, "other-judge");
  CHECK(store.has("traces-other-judge.jsonl"));
  const auto agreement = agreement_between(store.dir() / "traces.jsonl", store.dir() / "traces-other-judge.jsonl");
  CHECK(agreement.judge_a == "mock-judge");
  CHECK(agreement.judge_b == "other-judge");
  CHECK(agreement.n_samples > 6);
  CHECK(verify(config.out_dir).ok());
}

TEST_CASE("simulate stores synthetic traces") {
  TempDir dir("sim");
  const auto config = parse_config(json::parse(R"({
    "run_id": "sim", "seed": 3,
    "simulations": [{"agent": "bayesian", "trajectories": 50, "steps": 4},
                    {"agent": "entrenched", "gamma": 0.1, "noise_sd": 0.05, "trajectories": 50, "steps": 4}]
  })"),
                                   dir.path);
  RunStore store(config.out_dir, derive_run_id(config));
  CHECK(simulate(config, store).produced == 100);
  const auto cells = score_run(store, PairingMode::per_step);
  REQUIRE(cells.size() == 2);
  CHECK(store.read_problems().front().id.rfind("s0-", 0) == 0);
  CHECK(verify(config.out_dir).ok());
}
