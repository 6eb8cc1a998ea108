// mscore: command-line driver for runs, scoring and reports.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/stats.hpp"

namespace fs = std::filesystem;
using namespace mscore;
using namespace mscore::harness;

namespace {

struct Globals {
  std::string config;
  std::string cache_dir;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
  std::string pairing;
};

// Reads the config file (or starts from an empty one) and lays the global
// flags over it before parsing, so overrides go through the same checks.
RunConfig load(const Globals& g, json extra = json::object()) {
  json j = json::object();
  fs::path base = fs::current_path();
  if (!g.config.empty()) {
    std::ifstream in(g.config, std::ios::binary);
    if (!in) throw Error(ErrorKind::invalid_config, fmt::format("cannot open {}", g.config));
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::invalid_config, fmt::format("{}: {}", g.config, e.what()));
    }
    base = fs::absolute(g.config).parent_path();
  }
  if (!g.cache_dir.empty()) j["cache_dir"] = fs::absolute(g.cache_dir).string();
  if (!g.out_dir.empty()) j["out_dir"] = fs::absolute(g.out_dir).string();
  if (g.seed) j["seed"] = *g.seed;
  if (g.parallel) j["parallel"] = *g.parallel;
  if (!g.pairing.empty()) j["pairing"] = g.pairing;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return parse_config(j, base);
}

PairingMode pairing_of(const Globals& g) {
  if (g.pairing.empty()) return PairingMode::per_step;
  try {
    return parse_pairing_mode(g.pairing);
  } catch (const Error& e) {
    throw Error(ErrorKind::invalid_config, e.what());
  }
}

// --run wins; otherwise the run the config would produce.
RunStore open_run(const Globals& g, const std::string& run) {
  if (!run.empty()) return RunStore::open(run);
  if (g.config.empty()) throw Error(ErrorKind::invalid_config, "pass --run or --config");
  const auto config = load(g);
  return RunStore::open(config.out_dir / derive_run_id(config));
}

void print_cells(const std::vector<ReportCell>& cells) {
  fmt::print("{:<24} {:<9} {:<18} {:<13} {:>12} {:>8} {:>8}\n", "model", "technique", "prompt", "domain", "M", "pairs",
             "brier");
  for (const auto& c : cells) {
    const auto text = c.martingale ? stats::format_score_cell(c.martingale->ols.slope, c.martingale->ols.p_value)
                                   : c.status;
    fmt::print("{:<24} {:<9} {:<18} {:<13} {:>12} {:>8} {:>8}\n", c.setup.model_id, to_string(c.setup.technique),
               to_string(c.setup.prompt_condition), to_string(c.setup.domain_tag), text, c.pairs.size(),
               c.brier ? fmt::format("{:.4f}", *c.brier) : "-");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-entrenchment measurement: runs, Martingale Scores and reports"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--cache-dir", g.cache_dir, "response cache directory");
  app.add_option("--out-dir", g.out_dir, "directory holding run directories");
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--parallel", g.parallel, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--pairing", g.pairing, "per-step or endpoint")->check(CLI::IsMember({"per-step", "per_step", "endpoint"}));

  auto* sim = app.add_subcommand("simulate", "run synthetic agents into a new run");
  std::string agent;
  std::size_t trajectories = 1000, steps = 8;
  double gamma = 0.0, noise_sd = 0.05;
  sim->add_option("--agent", agent, "bayesian or entrenched (when the config has no simulations)")
      ->check(CLI::IsMember({"bayesian", "entrenched"}));
  sim->add_option("--trajectories", trajectories);
  sim->add_option("--steps", steps);
  sim->add_option("--gamma", gamma);
  sim->add_option("--noise-sd", noise_sd);

  auto* gen = app.add_subcommand("generate", "run every setup on every problem");
  auto* jud = app.add_subcommand("judge", "elicit belief traces for stored trajectories");
  std::string judge_override;
  jud->add_option("--judge", judge_override, "second judge; traces go to traces-<judge>.jsonl");

  std::string run;
  auto* score = app.add_subcommand("score", "print Martingale Scores per setup");
  auto* report = app.add_subcommand("report", "write grid, scatter, density and pair reports");
  auto* attr = app.add_subcommand("attribute", "factor attribution over a run");
  std::vector<std::string> baselines;
  attr->add_option("--baseline", baselines, "factor=level, repeatable")->required();
  for (auto* sub : {score, report, attr, jud}) sub->add_option("--run", run, "run directory");

  auto* agree = app.add_subcommand("agreement", "correlate two judges' trace files");
  std::string traces_a, traces_b;
  agree->add_option("traces_a", traces_a)->required()->check(CLI::ExistingFile);
  agree->add_option("traces_b", traces_b)->required()->check(CLI::ExistingFile);

  auto* ver = app.add_subcommand("verify", "check run directories for orphans and foreign records");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      json extra = json::object();
      if (!agent.empty()) {
        json s{{"agent", agent}, {"trajectories", trajectories}, {"steps", steps}};
        if (agent == "entrenched") {
          s["gamma"] = gamma;
          s["noise_sd"] = noise_sd;
        }
        extra["simulations"] = json::array({s});
      }
      const auto config = load(g, extra);
      RunStore store(config.out_dir, derive_run_id(config));
      const auto s = simulate(config, store);
      fmt::print("{}: {} traces\n", store.dir().string(), s.produced);
    } else if (gen->parsed()) {
      const auto config = load(g);
      RunStore store(config.out_dir, derive_run_id(config));
      Backends backends(config);
      const auto s = generate(config, store, backends);
      backends.verify_scripts();
      fmt::print("{}: {} trajectories, {} failed\n", store.dir().string(), s.produced, s.failed);
    } else if (jud->parsed()) {
      const auto config = load(g);
      const auto store = run.empty() ? RunStore(config.out_dir, derive_run_id(config)) : RunStore::open(run);
      Backends backends(config);
      const auto s = judge(config, store, backends, judge_override);
      backends.verify_scripts();
      fmt::print("{}: {} traces, {} unjudged\n", store.dir().string(), s.produced, s.failed);
    } else if (score->parsed()) {
      print_cells(score_run(open_run(g, run), pairing_of(g)));
    } else if (report->parsed()) {
      const auto store = open_run(g, run);
      const auto cells = score_run(store, pairing_of(g));
      for (const auto& p : emit_reports(cells, store.report_dir(), store.run_id())) fmt::print("{}\n", p.string());
    } else if (attr->parsed()) {
      std::map<stats::Factor, std::string> levels;
      for (const auto& b : baselines) {
        const auto eq = b.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::invalid_config, fmt::format("baseline '{}' is not factor=level", b));
        try {
          levels[stats::parse_factor(b.substr(0, eq))] = b.substr(eq + 1);
        } catch (const Error& e) {
          throw Error(ErrorKind::invalid_config, e.what());
        }
      }
      const auto store = open_run(g, run);
      const auto r = attribute_run(store, levels, pairing_of(g));
      std::cout << stats::to_json(r).dump(2) << "\n";
    } else if (agree->parsed()) {
      const auto r = agreement_between(traces_a, traces_b);
      fmt::print("| judge | samples | r | rho | p |\n|---|---:|---:|---:|---|\n{}\n", stats::format_agreement_row(r));
    } else if (ver->parsed()) {
      fs::path out = g.out_dir;
      if (out.empty()) out = g.config.empty() ? fs::path("out") : load(g).out_dir;
      const auto r = verify(out);
      for (const auto& issue : r.issues) fmt::print(stderr, "{}\n", issue);
      fmt::print("{} runs, {} records, {} issues\n", r.runs, r.records, r.issues.size());
      return r.ok() ? 0 : 4;
    }
  } catch (const Error& e) {
    fmt::print(stderr, "mscore: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "mscore: {}\n", e.what());
    return 4;
  }
  return 0;
}
