#pragma once

// Synthetic belief-updating agents used as ground-truth oracles for the
// estimator stack.
//
// Random streams: trajectory i of a run seeded with s draws from
// std::mt19937_64 initialised with splitmix64_mix(s + (i + 1) * 0x9E3779B97F4A7C15).
// Uniforms take the top 53 bits of each output; normals use Box-Muller
// (one output per pair of uniforms); gammas use Marsaglia-Tsang with the
// u^(1/a) boost for shapes below one; Beta(a, b) = X / (X + Y).

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mscore/core.hpp"

namespace mscore::sim {

std::uint64_t splitmix64_mix(std::uint64_t z);
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();       // [0, 1)
  double uniform_open();  // (0, 1]
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean, double sd);
  double gamma(double shape);
  double beta(double a, double b);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

struct BayesianAgentConfig {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  std::size_t steps = 8;
  std::size_t trajectories = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EntrenchedAgentConfig {
  double gamma = 0.0;
  double anchor = 0.5;
  double noise_sd = 0.0;
  std::size_t steps = 8;
  std::size_t trajectories = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedRun {
  Setup setup;
  std::vector<Problem> problems;
  std::vector<BeliefTrace> traces;
  // clamped[i][t] is set when the transition b_t -> b_{t+1} of trace i hit
  // the [0,1] boundary. All false for the Bayesian agent.
  std::vector<std::vector<bool>> clamped;

  /// Per-step pairs in trace order, optionally skipping clamped transitions.
  std::vector<BeliefPair> pairs(bool exclude_clamped = false) const;
};

/// Beta-Bernoulli agent: b_t is the posterior mean after t observed flips of
/// a coin whose bias was drawn from Beta(alpha0, beta0).
SimulatedRun simulate_bayesian(const BayesianAgentConfig& config, std::size_t threads = 1);

/// b_{t+1} = clamp(b_t + gamma (b_t - anchor) + eta_t, 0, 1),
/// eta_t ~ Normal(0, noise_sd^2), b_0 ~ Uniform(0.05, 0.95).
SimulatedRun simulate_entrenched(const EntrenchedAgentConfig& config, std::size_t threads = 1);

/// Reads trace records (JSONL) verbatim. Any parse or invariant failure
/// throws Error(malformed_fixture) naming the 1-based line.
std::vector<BeliefTrace> scripted_traces(const std::filesystem::path& path);

}  // namespace mscore::sim
