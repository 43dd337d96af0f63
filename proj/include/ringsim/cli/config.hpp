#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ringsim/errors.hpp"
#include "ringsim/models.hpp"
#include "ringsim/propagator.hpp"

namespace ringsim::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Experiment {
  ring_trajectory,
  ring_ensemble,
  linearized_ensemble,
  linearized_steady,
  gaussian_evolve,
  gaussian_steady,
  gaussian_sweep,
  toy_trajectory,
  herald,
};

inline const std::vector<std::pair<Experiment, std::string>>& experiment_names() {
  static const std::vector<std::pair<Experiment, std::string>> names = {
      {Experiment::ring_trajectory, "ring-trajectory"},
      {Experiment::ring_ensemble, "ring-ensemble"},
      {Experiment::linearized_ensemble, "linearized-ensemble"},
      {Experiment::linearized_steady, "linearized-steady"},
      {Experiment::gaussian_evolve, "gaussian-evolve"},
      {Experiment::gaussian_steady, "gaussian-steady"},
      {Experiment::gaussian_sweep, "gaussian-sweep"},
      {Experiment::toy_trajectory, "toy-trajectory"},
      {Experiment::herald, "herald"},
  };
  return names;
}

inline std::string to_string(Experiment e) {
  for (const auto& [k, v] : experiment_names())
    if (k == e) return v;
  throw std::logic_error("unnamed experiment");
}

inline Experiment parse_experiment(const std::string& s) {
  for (const auto& [k, v] : experiment_names())
    if (v == s) return k;
  std::string known;
  for (const auto& [k, v] : experiment_names()) known += (known.empty() ? "" : ", ") + v;
  throw ConfigError("unknown experiment '" + s + "' (known: " + known + ")");
}

inline bool uses_ring(Experiment e) { return e == Experiment::ring_trajectory || e == Experiment::ring_ensemble; }

inline bool is_stochastic(Experiment e) {
  return e == Experiment::ring_trajectory || e == Experiment::ring_ensemble ||
         e == Experiment::linearized_ensemble || e == Experiment::toy_trajectory;
}

inline bool is_ensemble(Experiment e) { return e == Experiment::ring_ensemble || e == Experiment::linearized_ensemble; }

inline bool has_timeseries(Experiment e) {
  return is_stochastic(e) || e == Experiment::gaussian_evolve;
}

/// Observables a timeseries experiment may request.
inline std::vector<std::string> known_observables(Experiment e) {
  switch (e) {
    case Experiment::ring_trajectory: return {"photons", "cp", "leakage", "en", "p1", "p2"};
    case Experiment::ring_ensemble: return {"photons", "cp", "heralded_cp", "leakage", "p1", "p2"};
    case Experiment::linearized_ensemble: return {"photons", "cp", "heralded_cp", "p1", "p2"};
    case Experiment::gaussian_evolve: return {"photons", "cp", "en", "simon", "var_p", "cov_p"};
    case Experiment::toy_trajectory: return {"cp", "en", "jump_rate"};
    default: return {};
  }
}

inline std::vector<std::string> default_observables(Experiment e) {
  switch (e) {
    case Experiment::ring_trajectory: return {"photons", "cp", "leakage"};
    case Experiment::ring_ensemble: return {"photons", "cp", "heralded_cp", "leakage"};
    case Experiment::linearized_ensemble: return {"photons", "cp", "heralded_cp"};
    case Experiment::gaussian_evolve: return {"photons", "cp", "en", "simon"};
    case Experiment::toy_trajectory: return {"cp", "en", "jump_rate"};
    default: return {};
  }
}

enum class DetuningRule { minus_kappa, minus_omega, minus_hypot };

struct Numerics {
  int momentum_cutoff = 12;
  int fock_cutoff = 6;          // field Fock dimension
  int oscillator_cutoff = 4;    // per-particle Fock dimension (linearized and toy models)
  double t_final = 1.0;
  int n_steps = 100;            // grid intervals
  double rtol = 1e-8;
  double atol = 1e-10;
  int n_traj = 1;
  std::optional<std::uint64_t> base_seed;
  std::string propagator = "spectral";
  int well_offset = 1;
  int max_jump_evaluations = 1;

  std::vector<double> grid() const {
    std::vector<double> g(std::size_t(n_steps) + 1);
    for (int k = 0; k <= n_steps; ++k) g[std::size_t(k)] = k == n_steps ? t_final : t_final * k / n_steps;
    return g;
  }
  PropagatorKind propagator_kind() const {
    return propagator == "rk45" ? PropagatorKind::rk45 : PropagatorKind::spectral;
  }
  OdeOptions ode() const {
    OdeOptions o;
    o.rtol = rtol;
    o.atol = atol;
    return o;
  }
};

struct Sweep {
  std::vector<double> omega;
  std::vector<double> kappa;
  std::vector<double> g;
  std::vector<double> delta_c;
  std::vector<DetuningRule> delta_c_rules;
};

struct Outputs {
  std::string directory = "out";
  std::vector<std::string> observables;
  std::vector<double> snapshot_times;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  Experiment experiment = Experiment::gaussian_steady;
  RingParams ring;
  OscillatorParams oscillator;
  Numerics numerics;
  std::optional<Sweep> sweep;
  Outputs outputs;
};

namespace detail {

inline void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("'" + where + "." + key + "' has the wrong type");
  }
}

inline void read_number(const json& obj, const std::string& where, const char* key, double& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) throw ConfigError("'" + where + "." + key + "' must be a number");
  out = obj.at(key).get<double>();
}

inline void read_int(const json& obj, const std::string& where, const char* key, int& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number_integer()) throw ConfigError("'" + where + "." + key + "' must be an integer");
  out = obj.at(key).get<int>();
}

inline std::vector<double> read_numbers(const json& obj, const std::string& where, const char* key) {
  std::vector<double> out;
  if (!obj.contains(key)) return out;
  const auto& arr = obj.at(key);
  if (!arr.is_array()) throw ConfigError("'" + where + "." + key + "' must be an array of numbers");
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError("'" + where + "." + key + "' must be an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::string rule_name(DetuningRule r) {
  switch (r) {
    case DetuningRule::minus_kappa: return "-kappa";
    case DetuningRule::minus_omega: return "-omega";
    case DetuningRule::minus_hypot: return "-hypot";
  }
  return {};
}

inline DetuningRule parse_rule(const std::string& s) {
  for (auto r : {DetuningRule::minus_kappa, DetuningRule::minus_omega, DetuningRule::minus_hypot})
    if (rule_name(r) == s) return r;
  throw ConfigError("unknown detuning rule '" + s + "' (known: -kappa, -omega, -hypot)");
}

}  // namespace detail

inline double resolve_detuning(DetuningRule r, double omega, double kappa) {
  switch (r) {
    case DetuningRule::minus_kappa: return -kappa;
    case DetuningRule::minus_omega: return -omega;
    case DetuningRule::minus_hypot: return -std::hypot(kappa, omega);
  }
  return 0.0;
}

/// Checks cross-field consistency. Physics-regime checks stay with the model types.
inline void validate(const ExperimentConfig& c) {
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  const auto& n = c.numerics;
  if (n.momentum_cutoff < 1) throw ConfigError("numerics.momentum_cutoff must be at least 1");
  if (n.fock_cutoff < 2) throw ConfigError("numerics.fock_cutoff must be at least 2");
  if (n.oscillator_cutoff < 2) throw ConfigError("numerics.oscillator_cutoff must be at least 2");
  if (!(n.t_final > 0.0) || !std::isfinite(n.t_final)) throw ConfigError("numerics.t_final must be positive");
  if (n.n_steps < 1) throw ConfigError("numerics.n_steps must be at least 1");
  if (!(n.rtol > 0.0) || !(n.atol > 0.0)) throw ConfigError("numerics.rtol and numerics.atol must be positive");
  if (n.n_traj < 1) throw ConfigError("numerics.n_traj must be at least 1");
  if (n.propagator != "spectral" && n.propagator != "rk45")
    throw ConfigError("numerics.propagator must be 'spectral' or 'rk45'");
  if (n.well_offset < 1) throw ConfigError("numerics.well_offset must be at least 1");
  if (n.max_jump_evaluations < 0) throw ConfigError("numerics.max_jump_evaluations must be non-negative");
  if (is_stochastic(c.experiment) && !n.base_seed)
    throw ConfigError("numerics.base_seed is required for the stochastic experiment " + to_string(c.experiment));
  if (c.experiment == Experiment::ring_trajectory && n.n_traj != 1)
    throw ConfigError("ring-trajectory runs exactly one trajectory; use ring-ensemble for n_traj > 1");

  const auto known = known_observables(c.experiment);
  if (!has_timeseries(c.experiment) && !c.outputs.observables.empty())
    throw ConfigError("experiment " + to_string(c.experiment) + " has no timeseries; outputs.observables must be empty");
  for (const auto& o : c.outputs.observables)
    if (std::find(known.begin(), known.end(), o) == known.end())
      throw ConfigError("observable '" + o + "' is not available for " + to_string(c.experiment));

  const auto grid = n.grid();
  for (double t : c.outputs.snapshot_times) {
    const bool on_grid = std::any_of(grid.begin(), grid.end(),
                                     [t](double g) { return std::abs(g - t) <= 1e-12 * std::max(1.0, std::abs(t)); });
    if (!on_grid) throw ConfigError("snapshot time " + std::to_string(t) + " is not a point of the time grid");
  }
  if (!c.outputs.snapshot_times.empty() && !is_ensemble(c.experiment) && c.experiment != Experiment::ring_trajectory)
    throw ConfigError("outputs.snapshot_times only apply to ring-trajectory and ensemble experiments");

  if ((c.experiment == Experiment::gaussian_sweep) != c.sweep.has_value())
    throw ConfigError(c.sweep ? "a sweep section is only valid for gaussian-sweep" : "gaussian-sweep needs a sweep section");
  if (c.sweep) {
    const auto& s = *c.sweep;
    if (s.omega.empty() || s.kappa.empty() || s.g.empty())
      throw ConfigError("sweep.omega, sweep.kappa and sweep.g must be non-empty");
    if (s.delta_c.empty() && s.delta_c_rules.empty())
      throw ConfigError("sweep needs sweep.delta_c values or sweep.delta_c_rules");
  }
  if (c.outputs.directory.empty()) throw ConfigError("outputs.directory must not be empty");
}

inline ExperimentConfig parse_config(const json& j) {
  detail::require_keys(j, "", {"schema_version", "experiment", "ring", "oscillator", "numerics", "sweep", "outputs"});
  ExperimentConfig c;
  if (!j.contains("schema_version")) throw ConfigError("missing key 'schema_version'");
  if (!j.contains("experiment")) throw ConfigError("missing key 'experiment'");
  detail::read_int(j, "", "schema_version", c.schema_version);
  if (!j.at("experiment").is_string()) throw ConfigError("'experiment' must be a string");
  c.experiment = parse_experiment(j.at("experiment").get<std::string>());

  if (uses_ring(c.experiment) && j.contains("oscillator"))
    throw ConfigError("ring experiments take a 'ring' section, not 'oscillator'");
  if (!uses_ring(c.experiment) && j.contains("ring"))
    throw ConfigError(to_string(c.experiment) + " takes an 'oscillator' section, not 'ring'");

  if (j.contains("ring")) {
    const auto& r = j.at("ring");
    detail::require_keys(r, "ring", {"alpha_c", "U0", "delta_c", "kappa", "allow_unstable"});
    detail::read_number(r, "ring", "alpha_c", c.ring.alpha_c);
    detail::read_number(r, "ring", "U0", c.ring.U0);
    detail::read_number(r, "ring", "delta_c", c.ring.delta_c);
    detail::read_number(r, "ring", "kappa", c.ring.kappa);
    detail::read(r, "ring", "allow_unstable", c.ring.allow_unstable);
  }
  if (j.contains("oscillator")) {
    const auto& o = j.at("oscillator");
    detail::require_keys(o, "oscillator", {"omega", "g", "delta_c", "kappa", "k_xi0"});
    detail::read_number(o, "oscillator", "omega", c.oscillator.omega);
    detail::read_number(o, "oscillator", "g", c.oscillator.g);
    detail::read_number(o, "oscillator", "delta_c", c.oscillator.delta_c);
    detail::read_number(o, "oscillator", "kappa", c.oscillator.kappa);
    detail::read_number(o, "oscillator", "k_xi0", c.oscillator.k_xi0);
  }
  if (j.contains("numerics")) {
    const auto& n = j.at("numerics");
    detail::require_keys(n, "numerics",
                         {"momentum_cutoff", "fock_cutoff", "oscillator_cutoff", "t_final", "n_steps", "rtol", "atol",
                          "n_traj", "base_seed", "propagator", "well_offset", "max_jump_evaluations"});
    auto& out = c.numerics;
    detail::read_int(n, "numerics", "momentum_cutoff", out.momentum_cutoff);
    detail::read_int(n, "numerics", "fock_cutoff", out.fock_cutoff);
    detail::read_int(n, "numerics", "oscillator_cutoff", out.oscillator_cutoff);
    detail::read_number(n, "numerics", "t_final", out.t_final);
    detail::read_int(n, "numerics", "n_steps", out.n_steps);
    detail::read_number(n, "numerics", "rtol", out.rtol);
    detail::read_number(n, "numerics", "atol", out.atol);
    detail::read_int(n, "numerics", "n_traj", out.n_traj);
    if (n.contains("base_seed")) {
      const auto& seed = n.at("base_seed");
      if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) throw ConfigError("'numerics.base_seed' must be a non-negative integer");
      out.base_seed = n.at("base_seed").get<std::uint64_t>();
    }
    detail::read(n, "numerics", "propagator", out.propagator);
    detail::read_int(n, "numerics", "well_offset", out.well_offset);
    detail::read_int(n, "numerics", "max_jump_evaluations", out.max_jump_evaluations);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::require_keys(s, "sweep", {"omega", "kappa", "g", "delta_c", "delta_c_rules"});
    Sweep sw;
    sw.omega = detail::read_numbers(s, "sweep", "omega");
    sw.kappa = detail::read_numbers(s, "sweep", "kappa");
    sw.g = detail::read_numbers(s, "sweep", "g");
    sw.delta_c = detail::read_numbers(s, "sweep", "delta_c");
    std::vector<std::string> rules;
    detail::read(s, "sweep", "delta_c_rules", rules);
    for (const auto& r : rules) sw.delta_c_rules.push_back(detail::parse_rule(r));
    c.sweep = std::move(sw);
  }
  if (j.contains("outputs")) {
    const auto& o = j.at("outputs");
    detail::require_keys(o, "outputs", {"directory", "observables", "snapshot_times"});
    detail::read(o, "outputs", "directory", c.outputs.directory);
    detail::read(o, "outputs", "observables", c.outputs.observables);
    c.outputs.snapshot_times = detail::read_numbers(o, "outputs", "snapshot_times");
  }
  if (c.outputs.observables.empty()) c.outputs.observables = default_observables(c.experiment);
  validate(c);
  return c;
}

/// The fully resolved config; parse_config(to_json(c)) reproduces c.
inline json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = to_string(c.experiment);
  if (uses_ring(c.experiment)) {
    j["ring"] = {{"alpha_c", c.ring.alpha_c},
                 {"U0", c.ring.U0},
                 {"delta_c", c.ring.delta_c},
                 {"kappa", c.ring.kappa},
                 {"allow_unstable", c.ring.allow_unstable}};
  } else {
    j["oscillator"] = {{"omega", c.oscillator.omega},
                       {"g", c.oscillator.g},
                       {"delta_c", c.oscillator.delta_c},
                       {"kappa", c.oscillator.kappa},
                       {"k_xi0", c.oscillator.k_xi0}};
  }
  const auto& n = c.numerics;
  j["numerics"] = {{"momentum_cutoff", n.momentum_cutoff},
                   {"fock_cutoff", n.fock_cutoff},
                   {"oscillator_cutoff", n.oscillator_cutoff},
                   {"t_final", n.t_final},
                   {"n_steps", n.n_steps},
                   {"rtol", n.rtol},
                   {"atol", n.atol},
                   {"n_traj", n.n_traj},
                   {"propagator", n.propagator},
                   {"well_offset", n.well_offset},
                   {"max_jump_evaluations", n.max_jump_evaluations}};
  if (n.base_seed) j["numerics"]["base_seed"] = *n.base_seed;
  if (c.sweep) {
    std::vector<std::string> rules;
    for (auto r : c.sweep->delta_c_rules) rules.push_back(detail::rule_name(r));
    j["sweep"] = {{"omega", c.sweep->omega},
                  {"kappa", c.sweep->kappa},
                  {"g", c.sweep->g},
                  {"delta_c", c.sweep->delta_c},
                  {"delta_c_rules", rules}};
  }
  j["outputs"] = {{"directory", c.outputs.directory},
                  {"observables", c.outputs.observables},
                  {"snapshot_times", c.outputs.snapshot_times}};
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace ringsim::cli
