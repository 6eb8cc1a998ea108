#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mscore/error.hpp"
#include "mscore/harness.hpp"
#include "mscore/templates.hpp"

namespace mscore::harness {

namespace {

[[noreturn]] void bad(std::string_view what) { throw Error(ErrorKind::invalid_config, what); }

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) bad(fmt::format("{} must be an object", where));
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) bad(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <typename T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    bad(fmt::format("'{}' has the wrong type", key));
  }
}

std::string require_string(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
    bad(fmt::format("{} needs a nonempty string '{}'", where, key));
  }
  return j[key].get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename Fn>
auto wrap(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::invalid_config) throw;
    throw Error(ErrorKind::invalid_config, e.what());
  }
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

SimulationSpec parse_simulation(const json& s, std::uint64_t default_seed) {
  SimulationSpec spec;
  spec.agent = require_string(s, "agent", "simulation");
  if (spec.agent == "bayesian") {
    check_keys(s, "bayesian simulation", {"agent", "alpha0", "beta0", "steps", "trajectories", "seed"});
    auto& c = spec.bayesian;
    c.alpha0 = get(s, "alpha0", c.alpha0);
    c.beta0 = get(s, "beta0", c.beta0);
    c.steps = get(s, "steps", c.steps);
    c.trajectories = get(s, "trajectories", c.trajectories);
    c.seed = get(s, "seed", default_seed);
    wrap([&] { c.validate(); return 0; });
  } else if (spec.agent == "entrenched") {
    check_keys(s, "entrenched simulation",
               {"agent", "gamma", "anchor", "noise_sd", "steps", "trajectories", "seed"});
    auto& c = spec.entrenched;
    c.gamma = get(s, "gamma", c.gamma);
    c.anchor = get(s, "anchor", c.anchor);
    c.noise_sd = get(s, "noise_sd", c.noise_sd);
    c.steps = get(s, "steps", c.steps);
    c.trajectories = get(s, "trajectories", c.trajectories);
    c.seed = get(s, "seed", default_seed);
    wrap([&] { c.validate(); return 0; });
  } else {
    bad(fmt::format("unknown simulation agent '{}'", spec.agent));
  }
  return spec;
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "config",
             {"run_id", "seed", "pairing", "parallel", "out_dir", "cache_dir", "datasets", "setups", "grid",
              "backends", "models", "default_backend", "temperatures", "max_tokens", "debate_rounds",
              "simulations"});
  RunConfig c;
  if (j.contains("run_id") && !j["run_id"].is_null()) c.run_id = require_string(j, "run_id", "config");
  c.seed = get<std::uint64_t>(j, "seed", 0);
  c.pairing = wrap([&] { return parse_pairing_mode(get<std::string>(j, "pairing", "per_step")); });
  c.parallel = get<std::size_t>(j, "parallel", 1);
  if (c.parallel < 1) bad("parallel must be >= 1");
  c.out_dir = resolve(base_dir, get<std::string>(j, "out_dir", "out"));
  if (j.contains("cache_dir") && j["cache_dir"].is_null()) {
    c.cache_dir.reset();
  } else {
    c.cache_dir = resolve(base_dir, get<std::string>(j, "cache_dir", "cache"));
  }
  if (j.contains("max_tokens") && !j["max_tokens"].is_null()) {
    c.max_tokens = get<int>(j, "max_tokens", 0);
    if (*c.max_tokens <= 0) bad("max_tokens must be positive");
  }
  c.debate_rounds = get<std::size_t>(j, "debate_rounds", 3);
  if (c.debate_rounds < 1) bad("debate_rounds must be >= 1");

  for (const auto& d : get<json>(j, "datasets", json::array())) {
    check_keys(d, "dataset", {"path", "format"});
    DatasetSpec spec;
    spec.path = resolve(base_dir, require_string(d, "path", "dataset"));
    spec.format = wrap([&] { return parse_input_format(get<std::string>(d, "format", "canonical")); });
    c.datasets.push_back(std::move(spec));
  }

  auto parse_setup = [&](const json& s) {
    check_keys(s, "setup", {"model", "prompt", "technique", "judge"});
    SetupSpec spec;
    spec.model_id = require_string(s, "model", "setup");
    spec.judge_model_id = require_string(s, "judge", "setup");
    spec.prompt = wrap([&] { return parse_prompt_condition(get<std::string>(s, "prompt", "none")); });
    spec.technique = wrap([&] { return parse_technique(get<std::string>(s, "technique", "cot")); });
    return spec;
  };
  for (const auto& s : get<json>(j, "setups", json::array())) c.setups.push_back(parse_setup(s));
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    check_keys(g, "grid", {"models", "prompts", "techniques", "judge"});
    const auto judge = require_string(g, "judge", "grid");
    for (const auto& m : get<std::vector<std::string>>(g, "models", {})) {
      for (const auto& t : get<std::vector<std::string>>(g, "techniques", {"cot"})) {
        for (const auto& p : get<std::vector<std::string>>(g, "prompts", {"none"})) {
          c.setups.push_back(parse_setup(json{{"model", m}, {"technique", t}, {"prompt", p}, {"judge", judge}}));
        }
      }
    }
  }

  const auto backends = get<json>(j, "backends", json::object());
  for (const auto& [id, b] : backends.items()) {
    check_keys(b, "backend " + id,
               {"kind", "endpoint", "credential_env", "script", "seed", "timeout_s", "max_in_flight"});
    BackendSpec spec;
    spec.id = id;
    spec.kind = require_string(b, "kind", "backend " + id);
    if (spec.kind == "http") {
      spec.endpoint = require_string(b, "endpoint", "backend " + id);
      spec.credential_env = get<std::string>(b, "credential_env", "");
    } else if (spec.kind == "scripted") {
      spec.script = resolve(base_dir, require_string(b, "script", "backend " + id));
    } else if (spec.kind == "mock") {
      spec.mock_seed = get<std::uint64_t>(b, "seed", c.seed);
    } else {
      bad(fmt::format("backend {}: unknown kind '{}'", id, spec.kind));
    }
    spec.timeout_s = get<int>(b, "timeout_s", 120);
    spec.max_in_flight = get<int>(b, "max_in_flight", 4);
    if (spec.timeout_s < 1 || spec.max_in_flight < 1) bad(fmt::format("backend {}: limits must be positive", id));
    c.backends.emplace(id, std::move(spec));
  }
  const auto models = get<json>(j, "models", json::object());
  for (const auto& [model, backend] : models.items()) {
    if (!backend.is_string()) bad(fmt::format("models.{} must name a backend", model));
    c.model_backends[model] = backend.get<std::string>();
  }
  c.default_backend = get<std::string>(j, "default_backend", c.backends.size() == 1 ? c.backends.begin()->first : "");
  for (const auto& [model, backend] : c.model_backends) {
    if (!c.backends.count(backend)) bad(fmt::format("model {} refers to unknown backend {}", model, backend));
  }
  if (!c.default_backend.empty() && !c.backends.count(c.default_backend)) {
    bad(fmt::format("unknown default backend {}", c.default_backend));
  }
  const auto temperatures = get<json>(j, "temperatures", json::object());
  for (const auto& [model, t] : temperatures.items()) {
    if (!t.is_number() || t.get<double>() < 0) bad(fmt::format("temperature for {} must be >= 0", model));
    c.temperatures[model] = t.get<double>();
  }

  const auto sims = get<json>(j, "simulations", json::array());
  for (std::size_t i = 0; i < sims.size(); ++i) c.simulations.push_back(parse_simulation(sims[i], c.seed + i));
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_config, fmt::format("cannot open {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_config, fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_config(j, path.parent_path());
}

ordered_json config_snapshot(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["pairing"] = to_string(c.pairing);
  auto datasets = ordered_json::array();
  for (const auto& d : c.datasets) {
    datasets.push_back({{"file", d.path.filename().string()},
                        {"format", to_string(d.format)},
                        {"sha256", file_digest(d.path)}});
  }
  j["datasets"] = std::move(datasets);
  auto setups = ordered_json::array();
  for (const auto& s : c.setups) {
    setups.push_back({{"model", s.model_id},
                      {"prompt", to_string(s.prompt)},
                      {"technique", to_string(s.technique)},
                      {"judge", s.judge_model_id}});
  }
  j["setups"] = std::move(setups);
  auto backends = ordered_json::object();
  for (const auto& [id, b] : c.backends) {
    ordered_json e{{"kind", b.kind}};
    if (b.kind == "http") {
      e["endpoint"] = b.endpoint;
      e["credential_env"] = b.credential_env;
    } else if (b.kind == "scripted") {
      e["script_sha256"] = file_digest(b.script);
    } else {
      e["seed"] = b.mock_seed;
    }
    backends[id] = std::move(e);
  }
  j["backends"] = std::move(backends);
  j["models"] = c.model_backends;
  j["default_backend"] = c.default_backend;
  j["temperature_overrides"] = c.temperatures;
  j["max_tokens"] = c.max_tokens ? ordered_json(*c.max_tokens) : ordered_json(nullptr);
  j["debate_rounds"] = c.debate_rounds;
  auto sims = ordered_json::array();
  for (const auto& s : c.simulations) {
    if (s.agent == "bayesian") {
      const auto& b = s.bayesian;
      sims.push_back({{"agent", "bayesian"}, {"alpha0", b.alpha0}, {"beta0", b.beta0}, {"steps", b.steps},
                      {"trajectories", b.trajectories}, {"seed", b.seed}});
    } else {
      const auto& e = s.entrenched;
      sims.push_back({{"agent", "entrenched"}, {"gamma", e.gamma}, {"anchor", e.anchor}, {"noise_sd", e.noise_sd},
                      {"steps", e.steps}, {"trajectories", e.trajectories}, {"seed", e.seed}});
    }
  }
  j["simulations"] = std::move(sims);
  j["template_version"] = kTemplateVersion;
  return j;
}

std::string derive_run_id(const RunConfig& config) {
  if (config.run_id) return *config.run_id;
  return "run-" + sha256_hex(config_snapshot(config).dump()).substr(0, 12);
}

}  // namespace mscore::harness
