// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "mscore/csv.hpp"
#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/pipeline.hpp"
#include "mscore/records.hpp"
#include "mscore/sim.hpp"
#include "mscore/stats.hpp"

using namespace mscore;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MSCORE_FIXTURES;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, std::string_view what) {
    if (!ok && pass) {
      pass = false;
      detail = std::string(what);
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::pair<std::vector<double>, std::vector<double>> split(std::span<const BeliefPair> pairs) {
  std::vector<double> xs, ys;
  for (const auto& p : pairs) {
    xs.push_back(p.b_prior);
    ys.push_back(p.delta_b);
  }
  return {xs, ys};
}

struct TempDir {
  fs::path path;
  explicit TempDir(std::string_view tag) {
    path = fs::temp_directory_path() / fmt::format("mscore-acceptance-{}-{}", tag, ::getpid());
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

// ---- 1 -----------------------------------------------------------------------

Outcome martingale_null() {
  Outcome o;
  const auto start = Clock::now();
  int within = 0;
  std::vector<double> abs_m;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    sim::BayesianAgentConfig cfg{1.0, 1.0, 8, 5000, seed};
    const auto pairs = sim::simulate_bayesian(cfg, threads()).pairs();
    const auto test = stats::ols_self_test_martingale(pairs, 3.0);
    within += test.passed;
    abs_m.push_back(std::fabs(test.slope));
  }
  std::nth_element(abs_m.begin(), abs_m.begin() + 50, abs_m.end());
  const double upper = abs_m[50];
  std::nth_element(abs_m.begin(), abs_m.begin() + 49, abs_m.begin() + 50);
  const double median = (abs_m[49] + upper) / 2;
  const double elapsed = seconds_since(start);
  o.require(within >= 95, "fewer than 95 seeds within 3 se");
  o.require(median <= 0.005, "median |M| above 0.005");
  o.require(elapsed <= 60, "over 60 s");
  o.detail = fmt::format("{}/100 seeds with |M| <= 3 se, median |M| = {:.5f}, {:.1f} s{}", within, median, elapsed,
                         o.pass ? "" : " (" + o.detail + ")");
  return o;
}

// ---- 2 -----------------------------------------------------------------------

Outcome consistency() {
  Outcome o;
  const auto start = Clock::now();
  auto se_at = [](std::size_t n, std::uint64_t seed) {
    sim::BayesianAgentConfig cfg{1.0, 1.0, 8, (n + 7) / 8, seed};
    auto pairs = sim::simulate_bayesian(cfg).pairs();
    pairs.resize(n);
    return stats::martingale_score(pairs, PairingMode::per_step).ols.se_slope;
  };
  const double small = se_at(100, 21);
  const double large = se_at(10000, 22);
  const double ratio = small / large;
  const double elapsed = seconds_since(start);
  o.require(ratio >= 7 && ratio <= 13, "ratio outside [7, 13]");
  o.require(elapsed <= 60, "over 60 s");
  o.detail = fmt::format("se(100) = {:.5f}, se(10000) = {:.6f}, ratio {:.2f}, {:.2f} s", small, large, ratio, elapsed);
  return o;
}

// ---- 3 -----------------------------------------------------------------------

Outcome parameter_recovery() {
  Outcome o;
  std::string summary;
  for (double gamma : {-0.10, 0.05, 0.10}) {
    sim::EntrenchedAgentConfig cfg;
    cfg.gamma = gamma;
    cfg.noise_sd = 0.02;
    cfg.steps = 5;
    cfg.trajectories = 1200;
    cfg.seed = 4;
    auto pairs = sim::simulate_entrenched(cfg).pairs(true);
    o.require(pairs.size() >= 5000, "fewer than 5000 unclamped pairs");
    if (pairs.size() < 5000) break;
    pairs.resize(5000);
    const auto rep = stats::martingale_score(pairs, PairingMode::per_step);
    o.require(std::fabs(rep.ols.slope - gamma) <= 0.02, fmt::format("gamma {:+.2f} not recovered", gamma));
    if (std::fabs(gamma) == 0.10) o.require(rep.significant, fmt::format("gamma {:+.2f} not significant", gamma));
    summary += fmt::format("{}gamma {:+.2f} -> {:+.4f} (p = {:.2g})", summary.empty() ? "" : ", ", gamma,
                           rep.ols.slope, rep.ols.p_value);
  }
  if (o.pass) o.detail = summary;
  return o;
}

// ---- 4 -----------------------------------------------------------------------

Outcome closed_form_ols() {
  Outcome o;
  const std::vector<double> xs{0.2, 0.5, 0.8}, ys{-0.1, 0.0, 0.1};
  const auto fit = stats::ols_fit(xs, ys);
  o.require(std::fabs(fit.slope - 1.0 / 3.0) <= 1e-12, "three-point slope");
  o.require(std::fabs(fit.intercept + 1.0 / 6.0) <= 1e-12, "three-point intercept");

  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0), noise(-0.2, 0.2), scale(-5.0, 5.0);
  for (int c = 0; c < 200 && o.pass; ++c) {
    const std::size_t n = 5 + gen() % 60;
    std::vector<double> x(n), y(n);
    const double beta = noise(gen);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = unit(gen);
      y[i] = beta * x[i] + noise(gen);
    }
    double a = scale(gen);
    if (std::fabs(a) < 0.1) a = 0.5;
    const double shift = noise(gen);
    const auto base = stats::ols_fit(x, y);
    std::vector<double> xa(n), yb(n), xs2(n);
    for (std::size_t i = 0; i < n; ++i) {
      xa[i] = a * x[i];
      yb[i] = y[i] + shift;
      xs2[i] = x[i] + shift;
    }
    const auto scaled = stats::ols_fit(xa, y);
    o.require(std::fabs(scaled.slope - base.slope / a) <= 1e-10, "scale covariance of slope");
    o.require(std::fabs(scaled.se_slope - base.se_slope / std::fabs(a)) <= 1e-10, "scale covariance of se");
    o.require(std::fabs(scaled.p_value - base.p_value) <= 1e-10, "p under scaling");
    const auto shifted = stats::ols_fit(x, yb);
    o.require(std::fabs(shifted.slope - base.slope) <= 1e-10, "slope under response shift");
    o.require(std::fabs(shifted.intercept - base.intercept - shift) <= 1e-10, "intercept under response shift");
    const auto moved = stats::ols_fit(xs2, y);
    o.require(std::fabs(moved.slope - base.slope) <= 1e-10, "slope under regressor shift");
    o.require(std::fabs(moved.se_slope - base.se_slope) <= 1e-10, "se under regressor shift");
  }
  if (o.pass) o.detail = fmt::format("slope {:.15f}, intercept {:.15f}; 200 affine cases", fit.slope, fit.intercept);
  return o;
}

// ---- 5 -----------------------------------------------------------------------

// Two-sided tail probabilities from scipy.stats.t.sf, computed before the build.
struct TailCase {
  int df;
  double t;
  double p;
};
const TailCase kTailOracle[] = {
    {1, 0.5, 0.70483276469913358},     {1, 2, 0.29516723530086642},
    {2, 1, 0.42264973081037427},       {2, 4.303, 0.04999252498521449},
    {3, 3.182, 0.050017136543313752},  {4, 2.776, 0.050022778319976403},
    {5, 2.015, 0.10000617232680625},   {5, -1.2, 0.28389105670610226},
    {7, 0.711, 0.5000825915520174},    {10, 2.228, 0.050011771817111327},
    {10, 1.372, 0.20005534139942949},  {15, 2.947, 0.009994167423479583},
    {20, 0.3, 0.76727300324376024},    {25, 1.708, 0.100026479256661},
    {30, -2.042, 0.050028670656197885}, {50, 3.5, 0.0009880850066256205},
    {100, 1.984, 0.049996773796167321}, {500, 2.586, 0.0099913557886367726},
    {1000, 0.842, 0.39998927034627496}, {40000, 1.96, 0.050002722580970542},
};

Outcome t_distribution() {
  Outcome o;
  o.require(stats::student_t_two_sided_p(0.0, 7) == 1.0, "p(t = 0) is not exactly 1");
  o.require(std::fabs(stats::student_t_two_sided_p(1.0, 1) - 0.5) <= 1e-10, "df = 1, t = 1");
  double worst = 0;
  for (const auto& c : kTailOracle) worst = std::max(worst, std::fabs(stats::student_t_two_sided_p(c.t, c.df) - c.p));
  o.require(worst <= 5e-4, "oracle mismatch");
  if (o.pass) o.detail = fmt::format("20 oracle values, max error {:.2e}", worst);
  return o;
}

// ---- 6 -----------------------------------------------------------------------

Outcome brier_baseline() {
  Outcome o;
  std::mt19937_64 gen(6);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + gen() % 200;
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(gen() % 2);
    const std::vector<double> half(n, 0.5);
    std::vector<double> perfect(y.begin(), y.end());
    o.require(stats::brier_score(half, y) == 0.25, "constant 0.5 is not exactly 0.25");
    o.require(stats::brier_score(perfect, y) == 0.0, "perfect predictor is not 0");
  }
  if (o.pass) o.detail = "100 random labeled sets";
  return o;
}

// ---- 7 -----------------------------------------------------------------------

Outcome attribution() {
  Outcome o;
  Setup a{"m", PromptCondition::none, Technique::cot, DomainTag::forecasting, "j"};
  Setup b = a;
  b.technique = Technique::debate;
  std::vector<std::pair<BeliefPair, Setup>> data;
  for (int i = 0; i < 40; ++i) {
    const double x = 0.05 + 0.9 * i / 39.0;
    data.push_back({{x, 0.05 * x, "a", a.digest(), 0}, a});
    data.push_back({{x, 0.15 * x, "b", b.digest(), 0}, b});
  }
  const auto rep = stats::attribute_factors(data, {{stats::Factor::technique, "cot"}});
  o.require(std::fabs(rep.slope_baseline.coefficient - 0.05) <= 1e-10, "main effect");
  o.require(rep.slope_terms.size() == 1 && std::fabs(rep.slope_terms[0].coefficient - 0.10) <= 1e-10, "interaction");

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<BeliefPair, Setup>> single;
  std::vector<double> xs, ys;
  for (int i = 0; i < 300; ++i) {
    const double x = unit(gen);
    const double y = 0.07 * x - 0.03 + 0.05 * (unit(gen) - 0.5);
    xs.push_back(x);
    ys.push_back(y);
    single.push_back({{x, y, "p", a.digest(), 0}, a});
  }
  const auto one = stats::attribute_factors(single, {{stats::Factor::technique, "cot"}});
  const auto fit = stats::ols_fit(xs, ys);
  o.require(std::fabs(one.slope_baseline.coefficient - fit.slope) <= 1e-10, "single-factor slope");
  o.require(std::fabs(one.intercept_baseline.coefficient - fit.intercept) <= 1e-10, "single-factor intercept");
  if (o.pass) {
    o.detail = fmt::format("main {:.12f}, interaction {:+.12f}", rep.slope_baseline.coefficient,
                           rep.slope_terms[0].coefficient);
  }
  return o;
}

// ---- 8 -----------------------------------------------------------------------

double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

// rank = #less + (#equal + 1) / 2
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

Outcome correlations() {
  Outcome o;
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0;
  int tied = 0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 3 + gen() % 40;
    std::vector<double> x(n), y(n);
    const bool ties = c % 2 == 0;
    tied += ties;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? std::round(unit(gen) * 5) / 5 : unit(gen);
      y[i] = ties ? std::round((0.5 * x[i] + unit(gen)) * 4) / 4 : 0.5 * x[i] + unit(gen);
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) x[0] += 0.5;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) y[0] += 0.5;
    worst = std::max(worst, std::fabs(stats::pearson(x, y).r - brute_pearson(x, y)));
    worst = std::max(worst, std::fabs(stats::spearman(x, y).r - brute_pearson(brute_ranks(x), brute_ranks(y))));
  }
  o.require(worst <= 1e-12, "oracle mismatch");
  o.detail = fmt::format("200 instances ({} with ties), max error {:.2e}", tied, worst);
  return o;
}

// ---- 9 -----------------------------------------------------------------------

std::string mock_problems(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    Problem p;
    p.id = fmt::format("q{:02d}", i);
    p.statement = fmt::format("Will event {} happen before the deadline?", i);
    p.option_yes = "Yes";
    p.option_no = "No";
    p.domain_tag = DomainTag::forecasting;
    p.ground_truth = static_cast<int>(i % 2);
    if (i % 4 == 0) p.extra_info.push_back({"background", fmt::format("Context for event {}.", i)});
    out += to_line(to_record(p)) + "\n";
  }
  return out;
}

struct MockRun {
  std::map<std::string, std::string> reports;
  std::size_t trajectories = 0;
  std::size_t fill_mismatches = 0;
  fs::path report_dir;
};

MockRun mock_run(const fs::path& root) {
  write(root / "problems.jsonl", mock_problems(24));
  write(root / "config.json", R"({
    "seed": 11,
    "parallel": 4,
    "datasets": [{"path": "problems.jsonl"}],
    "grid": {"models": ["mock-a", "mock-b"], "techniques": ["cot", "debate"],
             "prompts": ["none", "critical_thinking", "prior_conforming"], "judge": "mock-judge"},
    "backends": {"offline": {"kind": "mock"}}
  })");
  const auto config = harness::load_config(root / "config.json");
  harness::RunStore store(config.out_dir, harness::derive_run_id(config));
  harness::Backends backends(config);
  harness::generate(config, store, backends);
  harness::judge(config, store, backends);

  MockRun run;
  const auto problems = store.read_problems();
  std::map<std::string, Problem> by_id;
  for (const auto& p : problems) by_id[p.id] = p;
  std::map<std::pair<std::string, std::string>, std::size_t> beliefs;
  for (const auto& t : store.read_traces()) beliefs[{t.problem_id, t.setup_digest}] = t.beliefs.size();
  for (const auto& t : store.read_trajectories()) {
    ++run.trajectories;
    const auto want = t.steps.size() + 1;
    const auto prompt = pipeline::build_trace_prompt(by_id.at(t.problem_id), t.steps, t.transcript_kind);
    const bool advertised = prompt.find(fmt::format("EXACTLY {} beliefs", want)) != std::string::npos;
    auto it = beliefs.find({t.problem_id, t.setup.digest()});
    if (!advertised || it == beliefs.end() || it->second != want) ++run.fill_mismatches;
  }

  const auto cells = harness::score_run(store, config.pairing);
  harness::emit_reports(cells, store.report_dir(), store.run_id());
  run.report_dir = store.report_dir();
  for (const auto& f : fs::directory_iterator(store.report_dir())) {
    run.reports[f.path().filename().string()] = slurp(f.path());
  }
  return run;
}

Outcome pipeline_determinism() {
  Outcome o;
  TempDir one("e2e-a");
  TempDir two("e2e-b");
  const auto a = mock_run(one.path);
  const auto b = mock_run(two.path);
  o.require(a.reports.size() >= 10, "report files missing");
  o.require(a.reports == b.reports, "report files differ between runs");
  o.require(a.fill_mismatches == 0 && b.fill_mismatches == 0, "fill count differs from steps + 1");
  o.require(a.trajectories == 24 * 12, "trajectory count");
  if (o.pass) {
    o.detail = fmt::format("24 problems x 12 setups, {} report files identical, {} trajectories with steps + 1 fills",
                           a.reports.size(), a.trajectories);
  }
  return o;
}

// ---- 10 ----------------------------------------------------------------------

Outcome judging_robustness() {
  Outcome o;
  const auto cases = json::parse(slurp(kFixtures / "judge_replies.json"));
  TempDir dir("judge");

  // One problem and one trajectory per fixture case, judged through the
  // harness stage with a strictly ordered scripted backend.
  const Setup setup{"model-a", PromptCondition::none, Technique::cot, DomainTag::forecasting, "judge-a"};
  std::vector<Problem> problems;
  std::vector<Trajectory> trajectories;
  json script = json::array();
  std::size_t expected_pairs = 0, expected_judged = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    Problem p{fmt::format("case{:02d}", i), fmt::format("Case {:02d}: will the bridge open by June?", i), "Yes", "No",
              DomainTag::forecasting, 1, {}, std::nullopt};
    Trajectory t;
    t.problem_id = p.id;
    t.setup = setup;
    const auto steps = c["steps"].get<std::size_t>();
    for (std::size_t k = 0; k < steps; ++k) t.steps.push_back({k, Speaker::reasoner, fmt::format("step {}", k)});
    for (const auto& r : c["replies"]) script.push_back({{"expect_substring", p.statement}, {"reply", r}});
    if (c["outcome"] == "judged") {
      expected_pairs += steps;
      ++expected_judged;
    }
    problems.push_back(std::move(p));
    trajectories.push_back(std::move(t));
  }
  write(dir.path / "script.json", script.dump());
  const auto config = harness::parse_config(json::parse(R"({
    "run_id": "judging", "cache_dir": null,
    "backends": {"script": {"kind": "scripted", "script": "script.json"}}
  })"),
                                            dir.path);
  harness::RunStore store(config.out_dir, *config.run_id);
  store.write_problems(problems);
  const std::vector<Setup> setups{setup};
  store.write_setups(setups);
  store.write_trajectories(trajectories);
  harness::Backends backends(config);
  const auto summary = harness::judge(config, store, backends);
  backends.verify_scripts();

  const auto traces = store.read_traces();
  std::map<std::string, const BeliefTrace*> by_id;
  for (const auto& t : traces) by_id[t.problem_id] = &t;
  std::size_t partial = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const auto* t = by_id.count(problems[i].id) ? by_id.at(problems[i].id) : nullptr;
    const auto name = c["name"].get<std::string>();
    if (c["outcome"] == "judged") {
      o.require(t != nullptr, name + ": expected a trace");
      if (!t) continue;
      o.require(t->beliefs == c["beliefs"].get<std::vector<double>>(), name + ": beliefs");
      o.require(t->warnings.size() == c["clamped"].get<std::size_t>(), name + ": clamp warnings");
      if (t->beliefs.size() != trajectories[i].steps.size() + 1) ++partial;
    } else {
      o.require(t == nullptr, name + ": unjudged case produced a trace");
    }
  }
  const auto unjudged = read_jsonl(store.dir() / "unjudged.jsonl");
  const auto cells = harness::score_run(store, PairingMode::per_step);
  std::size_t pairs = 0;
  for (const auto& c : cells) pairs += c.pairs.size();
  o.require(summary.produced == expected_judged, "judged count");
  o.require(unjudged.size() == cases.size() - expected_judged, "unjudged count");
  o.require(partial == 0, "partial trace stored");
  o.require(pairs == expected_pairs, "pair extraction saw beliefs outside judged traces");
  o.detail = fmt::format("{} cases: {} judged, {} excluded, {} partial traces, {} pairs{}", cases.size(),
                         summary.produced, unjudged.size(), partial, pairs, o.pass ? "" : " (" + o.detail + ")");
  return o;
}

// ---- 11 ----------------------------------------------------------------------

Outcome report_fidelity() {
  Outcome o;
  TempDir dir("fidelity");
  // A simulated run gives a mix of significant and null cells.
  const auto config = harness::parse_config(json::parse(R"({
    "run_id": "fidelity", "seed": 8,
    "simulations": [
      {"agent": "bayesian", "trajectories": 300, "steps": 6},
      {"agent": "entrenched", "gamma": 0.0, "noise_sd": 0.05, "trajectories": 100, "steps": 4},
      {"agent": "entrenched", "gamma": 0.01, "noise_sd": 0.05, "trajectories": 100, "steps": 4},
      {"agent": "entrenched", "gamma": 0.03, "noise_sd": 0.05, "trajectories": 60, "steps": 4},
      {"agent": "entrenched", "gamma": 0.1, "noise_sd": 0.02, "trajectories": 200, "steps": 4},
      {"agent": "entrenched", "gamma": -0.05, "noise_sd": 0.05, "trajectories": 80, "steps": 4}
    ]
  })"),
                                            dir.path);
  harness::RunStore store(config.out_dir, *config.run_id);
  harness::simulate(config, store);
  const auto cells = harness::score_run(store, PairingMode::per_step);
  harness::emit_reports(cells, store.report_dir(), store.run_id());

  std::map<std::string, std::vector<BeliefPair>> groups;
  for (auto& p : stats::read_pairs_csv(store.report_dir() / "pairs.csv")) groups[p.setup_digest].push_back(p);

  std::ifstream in(store.report_dir() / "grid.csv", std::ios::binary);
  csv::Table grid(in);
  const auto col = [&](const char* name) { return *grid.column(name); };
  const auto digest_c = col("setup_digest"), cell_c = col("cell"), slope_c = col("slope"), p_c = col("p_value");
  std::size_t rows = 0, starred = 0;
  double worst = 0;
  while (auto row = grid.next()) {
    ++rows;
    const auto& r = *row;
    const auto& g = groups[r[digest_c]];
    const auto [xs, ys] = split(g);
    const auto fit = stats::ols_fit(xs, ys);
    worst = std::max(worst, std::fabs(fit.slope - std::stod(r[slope_c])));
    const double p = std::stod(r[p_c]);
    const bool star = !r[cell_c].empty() && r[cell_c].back() == '*';
    starred += star;
    o.require(star == (p < 0.05), fmt::format("star mismatch at p = {}", p));
    o.require(star == (fit.p_value < 0.05), "star disagrees with recomputed p");
  }
  o.require(rows == cells.size() && rows >= 2, "grid rows");
  o.require(worst <= 1e-12, "grid slope differs from pair CSV refit");
  o.require(starred > 0 && starred < rows, "grid lacks both starred and plain cells");

  // boundary: exactly 0.05 is not starred
  o.require(stats::format_score_cell(0.0671, 0.03) == "+0.0671*", "p = 0.03 render");
  o.require(stats::format_score_cell(0.0671, 0.05) == "+0.0671", "p = 0.05 render");
  o.require(stats::format_score_cell(0.0018, 0.4) == "+0.0018", "p >= 0.05 render");
  o.detail = fmt::format("{} cells refit from pairs.csv, max slope error {:.1e}, {} starred{}", rows, worst, starred,
                         o.pass ? "" : " (" + o.detail + ")");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"martingale null", martingale_null},
      {"consistency", consistency},
      {"parameter recovery", parameter_recovery},
      {"closed-form OLS", closed_form_ols},
      {"t distribution", t_distribution},
      {"Brier baseline", brier_baseline},
      {"attribution exactness", attribution},
      {"correlation oracles", correlations},
      {"pipeline determinism", pipeline_determinism},
      {"judging robustness", judging_robustness},
      {"report fidelity", report_fidelity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = fmt::format("threw: {}", e.what());
    }
    failed += !o.pass;
    fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
