#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/parallel.hpp"
#include "mscore/pipeline.hpp"
#include "mscore/templates.hpp"

#ifndef MSCORE_VERSION
#define MSCORE_VERSION "0.0.0"
#endif

namespace mscore::harness {

namespace {

std::uint64_t digest64(std::string_view text) {
  const auto hex = sha256_hex(text).substr(0, 16);
  std::uint64_t v = 0;
  std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
  return v;
}

bool is_backend_failure(ErrorKind k) {
  return k == ErrorKind::auth_failure || k == ErrorKind::rate_limited_exhausted ||
         k == ErrorKind::malformed_backend_reply || k == ErrorKind::backend_error ||
         k == ErrorKind::script_mismatch;
}

double temperature_for(const RunConfig& config, const std::string& model, llm::CallRole role) {
  auto it = config.temperatures.find(model);
  return it != config.temperatures.end() ? it->second : llm::default_temperature(role, model);
}

std::string file_safe(std::string_view name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return out;
}

}  // namespace

llm::WireReply MockTransport::send(const llm::ChatRequest& request) {
  std::string material = fmt::format("mock/v1|{}|{}", seed_, request.model_id);
  bool debate = false;
  for (const auto& m : request.messages) {
    material += fmt::format("|{}:{}", llm::to_string(m.role), m.text);
    debate = debate || m.text.find("debate competition") != std::string::npos;
  }
  sim::Rng rng(digest64(material));
  const auto& prompt = request.messages.back().text;

  if (auto pos = prompt.find("EXACTLY "); pos != std::string::npos) {
    std::size_t n = 0;
    const char* begin = prompt.data() + pos + 8;
    std::from_chars(begin, prompt.data() + prompt.size(), n);
    // a random walk with mild entrenchment around 0.5
    std::string out = "[";
    double b = rng.uniform(0.1, 0.9);
    for (std::size_t i = 0; i < n; ++i) {
      out += fmt::format("{}{{\"belief\": {:.3f}}}", i ? ", " : "", b);
      b = std::clamp(b + 0.15 * (b - 0.5) + rng.normal(0.0, 0.05), 0.0, 1.0);
    }
    out += "]";
    return {200, out, {}};
  }
  if (prompt.find("Respond in this format, with nothing else") != std::string::npos) {
    return {200, fmt::format("{{\"belief\": {:.3f}}}", rng.uniform(0.05, 0.95)), {}};
  }
  if (debate) {
    return {200, fmt::format("Argument {:04x}: the evidence on balance supports my side.", rng.next() & 0xffff), {}};
  }
  const std::size_t steps = 2 + rng.next() % 5;
  std::string out;
  for (std::size_t i = 0; i < steps; ++i) {
    out += fmt::format("{}Step {}: weigh consideration {:04x}.", i ? "\n\n" : "", i + 1, rng.next() & 0xffff);
  }
  return {200, out, {}};
}

Backends::Backends(const RunConfig& config)
    : model_backends_(config.model_backends), default_backend_(config.default_backend) {
  for (const auto& [id, spec] : config.backends) {
    std::shared_ptr<llm::Transport> transport;
    if (spec.kind == "http") {
      transport = std::make_shared<llm::HttpTransport>(
          llm::HttpBackendConfig{spec.endpoint, spec.credential_env, std::chrono::seconds(spec.timeout_s)});
    } else if (spec.kind == "scripted") {
      auto script = llm::ScriptedTransport::from_file(spec.script);
      scripts_.push_back(script);
      transport = script;
      ordered_ = true;
    } else {
      transport = std::make_shared<MockTransport>(spec.mock_seed);
    }
    llm::ClientOptions options;
    options.cache_dir = config.cache_dir;
    options.max_in_flight = spec.max_in_flight;
    clients_.emplace(id, std::make_shared<llm::ChatClient>(id, transport, options));
  }
}

llm::ChatClient& Backends::for_model(const std::string& model_id) {
  auto it = model_backends_.find(model_id);
  const auto& id = it != model_backends_.end() ? it->second : default_backend_;
  auto client = clients_.find(id);
  if (client == clients_.end()) {
    throw Error(ErrorKind::invalid_config, fmt::format("no backend configured for model {}", model_id));
  }
  return *client->second;
}

void Backends::verify_scripts() const {
  for (const auto& s : scripts_) s->verify_exhausted();
}

ordered_json manifest_base(const RunConfig& config, const std::string& run_id) {
  ordered_json j;
  j["run_id"] = run_id;
  j["tool_version"] = MSCORE_VERSION;
  j["seed"] = config.seed;
  j["config"] = config_snapshot(config);
  j["template_digests"] = template_digests();
  return j;
}

StageSummary generate(const RunConfig& config, const RunStore& store, Backends& backends) {
  std::vector<Problem> problems;
  for (const auto& d : config.datasets) {
    auto loaded = load_problems(d.path, d.format);
    problems.insert(problems.end(), loaded.begin(), loaded.end());
  }
  std::sort(problems.begin(), problems.end(), [](const Problem& a, const Problem& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < problems.size(); ++i) {
    if (problems[i].id == problems[i - 1].id) throw Error(ErrorKind::duplicate_id, problems[i].id);
  }
  if (config.setups.empty()) throw Error(ErrorKind::invalid_config, "no setups configured");

  struct Job {
    const Problem* problem;
    Setup setup;
  };
  std::vector<Job> jobs;
  std::vector<Setup> setups;
  std::set<std::string> seen;
  for (const auto& p : problems) {
    for (const auto& s : config.setups) {
      Setup setup{s.model_id, s.prompt, s.technique, p.domain_tag, s.judge_model_id};
      if (seen.insert(setup.digest()).second) setups.push_back(setup);
      jobs.push_back({&p, setup});
    }
  }

  std::vector<std::optional<Trajectory>> results(jobs.size());
  std::vector<std::optional<FailureRecord>> failures(jobs.size());
  std::map<std::string, double> temperatures;
  for (const auto& s : config.setups) temperatures[s.model_id] = temperature_for(config, s.model_id, llm::CallRole::reasoner);

  const std::size_t threads = backends.ordered() ? 1 : config.parallel;
  std::exception_ptr fatal;
  try {
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
      const auto& job = jobs[i];
      pipeline::GenerationOptions options;
      options.temperature = temperatures[job.setup.model_id];
      options.max_tokens = config.max_tokens;
      options.debate_rounds = config.debate_rounds;
      options.seed = config.seed;
      auto& client = backends.for_model(job.setup.model_id);
      try {
        results[i] = job.setup.technique == Technique::cot
                         ? pipeline::run_cot(*job.problem, job.setup, client, options)
                         : pipeline::run_debate(*job.problem, job.setup, client, options);
      } catch (const pipeline::DebateError& e) {
        failures[i] = FailureRecord{job.problem->id, job.setup.digest(), e.what(), e.turn(), e.partial()};
        if (is_backend_failure(e.kind())) throw;
      } catch (const Error& e) {
        failures[i] = FailureRecord{job.problem->id, job.setup.digest(), e.what(), 0, std::nullopt};
        if (e.kind() != ErrorKind::no_reasoning_produced) throw;
      }
    });
  } catch (...) {
    fatal = std::current_exception();
  }

  std::vector<Trajectory> trajectories;
  std::vector<FailureRecord> failed;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (results[i]) trajectories.push_back(std::move(*results[i]));
    if (failures[i]) failed.push_back(std::move(*failures[i]));
  }
  store.write_failures(failed);
  if (fatal) std::rethrow_exception(fatal);

  store.write_problems(problems);
  store.write_setups(setups);
  store.write_trajectories(trajectories);
  ordered_json info{{"problems", problems.size()},
                    {"setups", setups.size()},
                    {"trajectories", trajectories.size()},
                    {"failures", failed.size()},
                    {"reasoner_temperatures", temperatures},
                    {"debate_rounds", config.debate_rounds},
                    {"max_tokens", config.max_tokens ? ordered_json(*config.max_tokens) : ordered_json("backend default")}};
  store.update_manifest(manifest_base(config, store.run_id()), "generate", info);
  return {trajectories.size(), failed.size()};
}

StageSummary judge(const RunConfig& config, const RunStore& store, Backends& backends,
                   const std::string& judge_override) {
  const auto problems = store.read_problems();
  const auto trajectories = store.read_trajectories();
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;

  std::vector<pipeline::JudgeOutcome> outcomes(trajectories.size());
  std::map<std::string, double> temperatures;
  for (const auto& t : trajectories) {
    const auto& model = judge_override.empty() ? t.setup.judge_model_id : judge_override;
    temperatures[model] = temperature_for(config, model, llm::CallRole::judge);
  }
  for (const auto& t : trajectories) {
    if (!by_id.count(t.problem_id)) {
      throw Error(ErrorKind::invalid_record, fmt::format("trajectory refers to unknown problem {}", t.problem_id));
    }
  }

  const std::size_t threads = backends.ordered() ? 1 : config.parallel;
  parallel_for(trajectories.size(), threads, [&](std::size_t i) {
    const auto& t = trajectories[i];
    pipeline::JudgeOptions options;
    options.judge_model_id = judge_override.empty() ? t.setup.judge_model_id : judge_override;
    options.temperature = temperatures.at(options.judge_model_id);
    options.max_tokens = config.max_tokens;
    outcomes[i] = pipeline::judge_trajectory(*by_id.at(t.problem_id), t, backends.for_model(options.judge_model_id),
                                             options);
  });

  std::vector<BeliefTrace> traces;
  std::vector<UnjudgedRecord> unjudged;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    auto& o = outcomes[i];
    if (o.trace) {
      traces.push_back(std::move(*o.trace));
    } else {
      unjudged.push_back({trajectories[i].problem_id, trajectories[i].setup.digest(), o.judge_model_id, o.attempts,
                          o.errors, o.fill.raw_reply});
    }
  }
  const std::string suffix = judge_override.empty() ? "" : "-" + file_safe(judge_override);
  const std::string traces_file = "traces" + suffix + ".jsonl";
  store.write_traces(traces, traces_file);
  store.write_unjudged(unjudged, "unjudged" + suffix + ".jsonl");
  ordered_json info{{"traces_file", traces_file},
                    {"traces", traces.size()},
                    {"unjudged", unjudged.size()},
                    {"judge_temperatures", temperatures},
                    {"judge_retries", pipeline::kJudgeRetries}};
  store.update_manifest(manifest_base(config, store.run_id()), "judge" + suffix, info);
  return {traces.size(), unjudged.size()};
}

StageSummary simulate(const RunConfig& config, const RunStore& store) {
  if (config.simulations.empty()) throw Error(ErrorKind::invalid_config, "no simulations configured");
  std::vector<Problem> problems;
  std::vector<Setup> setups;
  std::vector<BeliefTrace> traces;
  std::size_t clamped = 0;
  const bool prefix = config.simulations.size() > 1;
  for (std::size_t i = 0; i < config.simulations.size(); ++i) {
    const auto& spec = config.simulations[i];
    auto run = spec.agent == "bayesian" ? sim::simulate_bayesian(spec.bayesian, config.parallel)
                                        : sim::simulate_entrenched(spec.entrenched, config.parallel);
    for (const auto& flags : run.clamped) clamped += static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
    if (prefix) {
      for (auto& p : run.problems) p.id = fmt::format("s{}-{}", i, p.id);
      for (auto& t : run.traces) t.problem_id = fmt::format("s{}-{}", i, t.problem_id);
    }
    if (std::find(setups.begin(), setups.end(), run.setup) == setups.end()) setups.push_back(run.setup);
    problems.insert(problems.end(), run.problems.begin(), run.problems.end());
    traces.insert(traces.end(), run.traces.begin(), run.traces.end());
  }
  store.write_problems(problems);
  store.write_setups(setups);
  store.write_traces(traces);
  ordered_json info{{"simulations", config.simulations.size()}, {"traces", traces.size()}, {"clamped_steps", clamped}};
  store.update_manifest(manifest_base(config, store.run_id()), "simulate", info);
  return {traces.size(), 0};
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::unknown_format:
      return 2;
    case ErrorKind::auth_failure:
    case ErrorKind::rate_limited_exhausted:
    case ErrorKind::malformed_backend_reply:
    case ErrorKind::backend_error:
    case ErrorKind::script_mismatch:
      return 3;
    default:
      return 4;
  }
}

}  // namespace mscore::harness
