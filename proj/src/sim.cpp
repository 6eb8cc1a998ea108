#include "mscore/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/parallel.hpp"
#include "mscore/records.hpp"

namespace mscore::sim {

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64_mix(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

double Rng::normal(double mean, double sd) {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x;
    double v;
    do {
      x = normal(0.0, 1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

void BayesianAgentConfig::validate() const {
  if (!(alpha0 > 0.0) || !(beta0 > 0.0)) throw Error(ErrorKind::invalid_config, "alpha0 and beta0 must be positive");
  if (steps < 1) throw Error(ErrorKind::invalid_config, "steps must be >= 1");
  if (trajectories < 1) throw Error(ErrorKind::invalid_config, "trajectories must be >= 1");
}

void EntrenchedAgentConfig::validate() const {
  if (!(anchor >= 0.0 && anchor <= 1.0)) throw Error(ErrorKind::invalid_config, "anchor must lie in [0,1]");
  if (!(noise_sd >= 0.0)) throw Error(ErrorKind::invalid_config, "noise_sd must be nonnegative");
  if (!std::isfinite(gamma)) throw Error(ErrorKind::invalid_config, "gamma must be finite");
  if (steps < 1) throw Error(ErrorKind::invalid_config, "steps must be >= 1");
  if (trajectories < 1) throw Error(ErrorKind::invalid_config, "trajectories must be >= 1");
}

std::vector<BeliefPair> SimulatedRun::pairs(bool exclude_clamped) const {
  std::vector<BeliefPair> out;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    auto trace_pairs = make_belief_pairs(traces[i], PairingMode::per_step);
    for (std::size_t t = 0; t < trace_pairs.size(); ++t) {
      if (exclude_clamped && clamped[i][t]) continue;
      out.push_back(std::move(trace_pairs[t]));
    }
  }
  return out;
}

namespace {

SimulatedRun allocate(Setup setup, std::size_t n) {
  SimulatedRun run;
  run.setup = std::move(setup);
  run.problems.resize(n);
  run.traces.resize(n);
  run.clamped.resize(n);
  return run;
}

}  // namespace

SimulatedRun simulate_bayesian(const BayesianAgentConfig& config, std::size_t threads) {
  config.validate();
  Setup setup{"bayesian-agent", PromptCondition::none, Technique::cot, DomainTag::synthetic, "oracle"};
  auto run = allocate(setup, config.trajectories);
  const auto digest = setup.digest();

  parallel_for(config.trajectories, threads, [&](std::size_t i) {
    Rng rng(stream_seed(config.seed, i));
    const double theta = rng.beta(config.alpha0, config.beta0);
    const bool resolution = rng.bernoulli(theta);

    Problem& problem = run.problems[i];
    problem.id = fmt::format("bayes-{:06d}", i);
    problem.statement = "Will the resolution flip of this coin land heads?";
    problem.option_yes = "heads";
    problem.option_no = "tails";
    problem.domain_tag = DomainTag::synthetic;
    problem.ground_truth = resolution ? 1 : 0;

    BeliefTrace& trace = run.traces[i];
    trace.problem_id = problem.id;
    trace.setup_digest = digest;
    trace.technique = Technique::cot;
    trace.judge_model_id = setup.judge_model_id;
    trace.seed = config.seed;

    double a = config.alpha0;
    double b = config.beta0;
    trace.beliefs.push_back(a / (a + b));
    for (std::size_t t = 0; t < config.steps; ++t) {
      const bool heads = rng.bernoulli(theta);
      (heads ? a : b) += 1.0;
      trace.beliefs.push_back(a / (a + b));
      trace.steps.push_back({t, Speaker::reasoner, fmt::format("Observed flip {}: {}", t + 1, heads ? "heads" : "tails")});
    }
    run.clamped[i].assign(config.steps, false);
  });
  return run;
}

SimulatedRun simulate_entrenched(const EntrenchedAgentConfig& config, std::size_t threads) {
  config.validate();
  Setup setup{fmt::format("entrenched-agent(gamma={})", config.gamma), PromptCondition::none,
              Technique::cot, DomainTag::synthetic, "oracle"};
  auto run = allocate(setup, config.trajectories);
  const auto digest = setup.digest();

  parallel_for(config.trajectories, threads, [&](std::size_t i) {
    Rng rng(stream_seed(config.seed, i));

    Problem& problem = run.problems[i];
    problem.id = fmt::format("entrenched-{:06d}", i);
    problem.statement = "Synthetic proposition for an entrenched agent.";
    problem.option_yes = "yes";
    problem.option_no = "no";
    problem.domain_tag = DomainTag::synthetic;

    BeliefTrace& trace = run.traces[i];
    trace.problem_id = problem.id;
    trace.setup_digest = digest;
    trace.technique = Technique::cot;
    trace.judge_model_id = setup.judge_model_id;
    trace.seed = config.seed;

    auto& flags = run.clamped[i];
    double belief = rng.uniform(0.05, 0.95);
    trace.beliefs.push_back(belief);
    for (std::size_t t = 0; t < config.steps; ++t) {
      const double noise = config.noise_sd > 0.0 ? rng.normal(0.0, config.noise_sd) : 0.0;
      const double proposed = belief + config.gamma * (belief - config.anchor) + noise;
      const double next = std::clamp(proposed, 0.0, 1.0);
      flags.push_back(next != proposed);
      if (next != proposed) trace.warnings.push_back(fmt::format("clamped step {}", t));
      belief = next;
      trace.beliefs.push_back(belief);
      trace.steps.push_back({t, Speaker::reasoner, fmt::format("Step {}", t + 1)});
    }
  });
  return run;
}

std::vector<BeliefTrace> scripted_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::malformed_fixture, fmt::format("cannot open {}", path.string()));
  std::vector<BeliefTrace> traces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      traces.push_back(trace_from_record(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::malformed_fixture, fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return traces;
}

}  // namespace mscore::sim
