#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ringsim/analysis.hpp"
#include "ringsim/cli/config.hpp"
#include "ringsim/cli/writers.hpp"
#include "ringsim/gaussian.hpp"
#include "ringsim/master_equation.hpp"
#include "ringsim/mcwf.hpp"
#include "ringsim/models.hpp"

namespace ringsim::cli {

/// Scalar names of summary.json; every run writes all of them, null where not applicable.
inline const std::vector<std::string>& summary_scalar_names() {
  static const std::vector<std::string> names = {
      "steady_cp",       "heralded_cp",      "heralded_cp_spread",     "heralded_en",
      "g2",              "photons",          "gamma_plus",             "gamma_minus",
      "tau",             "upsilon",          "max_leakage",            "max_trajectory_leakage",
      "n_jumps",         "first_jump_en",    "first_jump_en_min",      "first_jump_cp",
      "photon_factor",   "peak_en",          "peak_en_time",           "final_en",
      "simon_agrees",    "max_cp_residual",  "max_g_dependence",       "steady_time",
  };
  return names;
}

/// Settings that never change results.
struct RunOptions {
  unsigned threads = 1;
  std::function<void(const std::string&)> log;
};

struct RunResult {
  std::filesystem::path directory;
  nlohmann::json summary;
  std::vector<std::string> files;  // relative to directory, in write order

  const nlohmann::json& scalar(const std::string& name) const { return summary.at("scalars").at(name); }
};

namespace detail {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }
  void write(const std::string& rel, const std::string& content) {
    atomic_write(root_ / rel, content);
    files_.push_back(rel);
  }
  const std::filesystem::path& root() const { return root_; }
  std::vector<std::string> files() const { return files_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

inline nlohmann::json empty_scalars() {
  nlohmann::json s = nlohmann::json::object();
  for (const auto& n : summary_scalar_names()) s[n] = nullptr;
  return s;
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline void set_rates(nlohmann::json& s, const OscillatorParams& p) {
  try {
    const auto r = stokes_rates(p);
    s["gamma_plus"] = r.gamma_plus;
    s["gamma_minus"] = r.gamma_minus;
    s["tau"] = r.tau;
  } catch (const RegimeError&) {
    // heating regime: no relaxation time
  }
  s["upsilon"] = effective_coupling_upsilon(p);
}

inline double cp_or_nan(const CorrelationReport& r) { return r.cp ? *r.cp : kNaN; }

/// Joint populations of the first two factors: momentum histogram for
/// lattices, Fock occupations for oscillators.
inline Eigen::MatrixXd joint_populations(const DensityMatrix& rho) {
  if (is_momentum(rho.space.factor(0))) return momentum_distribution(rho);
  const auto& s = rho.space;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(s.dim(0), s.dim(1));
  for (Index i = 0; i < s.total_dim(); ++i) p(s.digit(i, 0), s.digit(i, 1)) += rho.matrix(i, i).real();
  return p / p.sum();
}

inline double latter_half_mean(const std::vector<double>& grid, const std::vector<double>& v) {
  double acc = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (grid[k] >= 0.5 * grid.back() && std::isfinite(v[k])) {
      acc += v[k];
      ++n;
    }
  return n ? acc / n : kNaN;
}

/// Trajectory-level observables of a particles-plus-field model. Heralded
/// moments are weighted by ||a psi||^2 so that their ensemble averages divided
/// by the average weight are moments of the heralded ensemble state.
struct ModelObservables {
  SparseMatrix a, a2, p1, p2;
  bool lattice = false;

  explicit ModelObservables(const SpaceDescriptor& space)
      : a(field_annihilation(space).matrix()),
        a2(a * a),
        p1(particle_momentum(space, 0).matrix()),
        p2(particle_momentum(space, 1).matrix()),
        lattice(is_momentum(space.factor(0))) {}

  std::vector<Observable> internal() const {
    auto moments = [this](const Eigen::VectorXcd& v) {
      const Eigen::VectorXcd v1 = p1 * v, v2 = p2 * v;
      return std::array<double, 5>{v.dot(v1).real(), v.dot(v2).real(), v1.squaredNorm(), v2.squaredNorm(),
                                   v1.dot(v2).real()};
    };
    std::vector<Observable> obs;
    obs.push_back({"photons", [this](const StateVector& s) { return (a * s.amplitudes).squaredNorm(); }});
    obs.push_back({"photons2", [this](const StateVector& s) { return (a2 * s.amplitudes).squaredNorm(); }});
    const char* plain[] = {"p1", "p2", "p1p1", "p2p2", "p1p2"};
    const char* herald[] = {"hp1", "hp2", "hp1p1", "hp2p2", "hp1p2"};
    for (int m = 0; m < 5; ++m) {
      obs.push_back({plain[m], [moments, m](const StateVector& s) { return moments(s.amplitudes)[std::size_t(m)]; }});
      obs.push_back({herald[m], [this, moments, m](const StateVector& s) {
                       return moments(a * s.amplitudes)[std::size_t(m)];
                     }});
    }
    if (lattice) obs.push_back({"leakage", [](const StateVector& s) { return max_boundary_leakage(s); }});
    return obs;
  }
};

inline Observable entanglement_observable(const char* name) {
  return {name, [](const StateVector& s) { return log_negativity(reduced_density_matrix(s, {0, 1})); }};
}

inline Observable correlation_observable(const char* name) {
  return {name, [](const StateVector& s) { return cp_or_nan(momentum_correlation(s)); }};
}

inline double cp_from(double p1, double p2, double p1p1, double p2p2, double p1p2) {
  return cp_or_nan(correlation_from_moments(MomentMoments{p1, p2, p1p1, p2p2, p1p2}));
}

inline void add_correlations(EnsembleRecord& ens) {
  ens.add_derived("cp", {"p1", "p2", "p1p1", "p2p2", "p1p2"},
                  [](const std::vector<double>& m) { return cp_from(m[0], m[1], m[2], m[3], m[4]); });
  ens.add_derived("heralded_cp", {"photons", "hp1", "hp2", "hp1p1", "hp2p2", "hp1p2"},
                  [](const std::vector<double>& m) {
                    if (!(m[0] > 0.0)) return kNaN;
                    return cp_from(m[1] / m[0], m[2] / m[0], m[3] / m[0], m[4] / m[0], m[5] / m[0]);
                  });
}

inline std::string timeseries_csv(const std::vector<double>& grid, const std::vector<std::string>& names,
                                  const std::function<double(const std::string&, std::size_t)>& mean,
                                  const std::function<double(const std::string&, std::size_t)>& err) {
  std::vector<std::string> header = {"t"};
  for (const auto& n : names) {
    header.push_back(n);
    header.push_back(n + "_stderr");
  }
  CsvTable table(header);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> row = {grid[k]};
    for (const auto& n : names) {
      row.push_back(mean(n, k));
      row.push_back(err(n, k));
    }
    table.add_numbers(row);
  }
  return table.str();
}

inline std::string jumps_csv(const std::vector<const TrajectoryRecord*>& records, const std::vector<std::string>& names) {
  std::vector<std::string> header = {"traj", "t", "channel"};
  header.insert(header.end(), names.begin(), names.end());
  CsvTable table(header);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = *records[i];
    for (std::size_t j = 0; j < r.jump_times.size(); ++j) {
      std::vector<std::string> row = {std::to_string(i), format_double(r.jump_times[j]), std::to_string(r.jump_channels[j])};
      for (std::size_t o = 0; o < names.size(); ++o)
        row.push_back(o < r.jump_values[j].size() ? format_double(r.jump_values[j][o]) : std::string());
      table.add_row(std::move(row));
    }
  }
  return table.str();
}

/// First-jump statistics over the trajectories that jumped.
inline void set_first_jump(nlohmann::json& s, const std::vector<const TrajectoryRecord*>& records) {
  double en_sum = 0.0, en_min = std::numeric_limits<double>::infinity(), cp_sum = 0.0;
  int n_en = 0, n_cp = 0;
  long jumps = 0;
  for (const auto* r : records) {
    jumps += long(r->jump_times.size());
    if (r->jump_values.empty() || r->jump_values[0].empty()) continue;
    for (std::size_t o = 0; o < r->jump_names.size(); ++o) {
      const double v = r->jump_values[0][o];
      if (r->jump_names[o] == "en") {
        en_sum += v;
        en_min = std::min(en_min, v);
        ++n_en;
      } else if (r->jump_names[o] == "cp" && std::isfinite(v)) {
        cp_sum += v;
        ++n_cp;
      }
    }
  }
  s["n_jumps"] = jumps;
  if (n_en) {
    s["first_jump_en"] = en_sum / n_en;
    s["first_jump_en_min"] = en_min;
  }
  if (n_cp) s["first_jump_cp"] = cp_sum / n_cp;
}

// ---------------------------------------------------------------------------
// Experiments

struct ModelSetup {
  SpaceDescriptor space;
  SparseOperator h;
  std::vector<JumpChannel> channels;
  StateVector psi0;
  std::optional<OscillatorParams> effective;  // for rate scalars
};

inline ModelSetup particle_field_model(const ExperimentConfig& c) {
  const auto& n = c.numerics;
  if (uses_ring(c.experiment)) {
    c.ring.validate();
    auto space = ring_space(n.momentum_cutoff, n.fock_cutoff);
    auto h = build_ring_hamiltonian(c.ring, space);
    auto psi0 = initial_state_two_wells(c.ring, space, n.well_offset);
    std::optional<OscillatorParams> eff;
    if (c.ring.alpha_c > 0.0) {
      eff = derive_effective_params(c.ring);
    }
    return {space, h, {cavity_decay(space, c.ring.kappa)}, psi0, eff};
  }
  c.oscillator.validate();
  auto space = oscillator_space(n.oscillator_cutoff, n.fock_cutoff);
  auto h = build_linearized_hamiltonian(c.oscillator, space);
  auto psi0 = basis_state(space, {0, 0, 0});
  return {space, h, {cavity_decay(space, c.oscillator.kappa)}, psi0, c.oscillator};
}

inline void run_particle_field(const ExperimentConfig& c, const RunOptions& ro, OutputDir& out, nlohmann::json& s) {
  const auto& n = c.numerics;
  const auto grid = n.grid();
  auto log = [&](const std::string& m) { if (ro.log) ro.log(m); };
  const auto model = particle_field_model(c);
  log("space dimension " + std::to_string(model.space.total_dim()) + "; preparing propagator");
  const Dynamics dyn(model.h, model.channels, n.propagator_kind(), n.ode());
  const ModelObservables mo(model.space);

  EnsembleOptions eo;
  eo.threads = ro.threads;
  eo.trajectory.observables = mo.internal();
  const bool single = c.experiment == Experiment::ring_trajectory;
  const auto& wanted = c.outputs.observables;
  if (single && std::find(wanted.begin(), wanted.end(), "en") != wanted.end())
    eo.trajectory.observables.push_back(entanglement_observable("en"));
  eo.trajectory.jump_observables = {entanglement_observable("en"), correlation_observable("cp")};
  eo.trajectory.max_jump_evaluations = std::size_t(n.max_jump_evaluations);
  eo.trajectory.snapshot_times = c.outputs.snapshot_times;
  eo.reduced_factors = {0, 1};
  eo.herald = field_annihilation(model.space);

  log("running " + std::to_string(n.n_traj) + " trajectories");
  auto ens = run_ensemble(dyn, model.psi0, grid, std::size_t(n.n_traj), *n.base_seed, eo);
  add_correlations(ens);

  out.write("timeseries.csv",
            timeseries_csv(grid, wanted, [&](const std::string& name, std::size_t k) { return ens.mean_of(name)[k]; },
                           [&](const std::string& name, std::size_t k) { return ens.stderr_of(name)[k]; }));
  std::vector<const TrajectoryRecord*> recs;
  for (const auto& r : ens.trajectories) recs.push_back(&r);
  out.write("jumps.csv", jumps_csv(recs, ens.trajectories.front().jump_names));

  if (!ens.snapshots.empty()) {
    CsvTable index({"k", "t"});
    for (std::size_t k = 0; k < ens.snapshots.size(); ++k) {
      const auto& snap = ens.snapshots[k];
      index.add_row({std::to_string(k), format_double(snap.t)});
      out.write("snapshots/reduced_" + std::to_string(k) + ".csv", matrix_csv(joint_populations(snap.reduced)));
      if (!single && snap.heralded)
        out.write("snapshots/heralded_" + std::to_string(k) + ".csv", matrix_csv(joint_populations(*snap.heralded)));
    }
    out.write("snapshots/index.csv", index.str());
  }

  s["steady_cp"] = number_or_null(latter_half_mean(grid, ens.mean_of("cp")));
  const double ph = latter_half_mean(grid, ens.mean_of("photons"));
  s["photons"] = number_or_null(ph);
  if (ph > 0.0) s["g2"] = number_or_null(latter_half_mean(grid, ens.mean_of("photons2")) / (ph * ph));
  if (!single) {
    std::vector<double> hcp, hen;
    for (const auto& snap : ens.snapshots)
      if (snap.t >= 0.5 * grid.back() && snap.heralded) {
        hcp.push_back(cp_or_nan(momentum_correlation(*snap.heralded)));
        hen.push_back(log_negativity(*snap.heralded));
      }
    if (!hcp.empty()) {
      double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo, en_sum = 0.0;
      for (std::size_t i = 0; i < hcp.size(); ++i) {
        sum += hcp[i];
        lo = std::min(lo, hcp[i]);
        hi = std::max(hi, hcp[i]);
        en_sum += hen[i];
      }
      s["heralded_cp"] = number_or_null(sum / double(hcp.size()));
      s["heralded_cp_spread"] = number_or_null(hi - lo);
      s["heralded_en"] = en_sum / double(hen.size());
    } else {
      s["heralded_cp"] = number_or_null(latter_half_mean(grid, ens.mean_of("heralded_cp")));
    }
  }
  if (mo.lattice) {
    const auto& mean = ens.mean_of("leakage");
    s["max_leakage"] = *std::max_element(mean.begin(), mean.end());
    double worst = 0.0;
    for (const auto& r : ens.trajectories)
      for (double v : r.observable("leakage")) worst = std::max(worst, v);
    s["max_trajectory_leakage"] = worst;
  }
  set_first_jump(s, recs);
  if (model.effective) set_rates(s, *model.effective);
}

inline void run_toy(const ExperimentConfig& c, const RunOptions& ro, OutputDir& out, nlohmann::json& s) {
  const auto& n = c.numerics;
  const auto& p = c.oscillator;
  p.validate();
  const int cutoff = n.oscillator_cutoff;
  const FockSpace f{cutoff};
  const SpaceDescriptor space({f, f});
  const auto h = (embed(space, 0, number_operator(f)) + embed(space, 1, number_operator(f))) * p.omega;
  const cplx alpha = toy_field_amplitude(p);
  const JumpChannel channel(scattering_operator(cutoff) * (std::sqrt(2.0 * p.kappa) * alpha));
  const SparseMatrix jj = (channel.op().adjoint() * channel.op()).matrix();

  TrajectoryOptions opt;
  std::map<std::string, Observable> all = {
      {"cp", correlation_observable("cp")},
      {"en", entanglement_observable("en")},
      {"jump_rate", {"jump_rate", [jj](const StateVector& v) { return v.amplitudes.dot(jj * v.amplitudes).real(); }}},
  };
  for (const auto& name : c.outputs.observables) opt.observables.push_back(all.at(name));
  opt.jump_observables = {all.at("en"), all.at("cp"), all.at("jump_rate")};
  opt.max_jump_evaluations = std::size_t(n.max_jump_evaluations);
  if (ro.log) ro.log("running one toy-model trajectory");
  const auto psi0 = basis_state(space, {0, 0});
  const auto rec = evolve_trajectory(Dynamics(h, {channel}, n.propagator_kind(), n.ode()), psi0, n.grid(), *n.base_seed, opt);

  out.write("timeseries.csv",
            timeseries_csv(rec.grid, rec.names,
                           [&](const std::string& name, std::size_t k) { return rec.observable(name)[k]; },
                           [](const std::string&, std::size_t) { return 0.0; }));
  out.write("jumps.csv", jumps_csv({&rec}, rec.jump_names));
  set_first_jump(s, {&rec});

  const auto basis = scattering_basis(cutoff);
  const Eigen::VectorXcd coeffs = basis.eigenvectors.cast<cplx>().adjoint() * psi0.amplitudes;
  s["photon_factor"] = toy_jump_state(basis, coeffs, alpha).photon_factor;
  set_rates(s, p);
}

inline double covariance_photons(const CovarianceState& c) {
  using namespace quad;
  return 0.5 * (c.V(X, X) + c.V(P, P) + c.mean(X) * c.mean(X) + c.mean(P) * c.mean(P)) - 0.5;
}

inline void set_gaussian_steady(nlohmann::json& s, const OscillatorParams& p) {
  const auto ss = steady_state_covariance(build_drift_diffusion(p));
  s["steady_cp"] = ss.momentum_correlation();
  s["photons"] = covariance_photons(ss);
  try {
    s["g2"] = gaussian_field_g2(ss);
  } catch (const RegimeError&) {
    // vacuum field: g2 undefined
  }
  set_rates(s, p);
}

inline void run_gaussian_evolve(const ExperimentConfig& c, OutputDir& out, nlohmann::json& s) {
  const auto& p = c.oscillator;
  p.validate();
  const auto grid = c.numerics.grid();
  const auto dd = build_drift_diffusion(p);
  const auto states = evolve_covariance(dd, CovarianceState::vacuum(), grid, c.numerics.ode());
  std::vector<double> en(grid.size());
  bool agree = true;
  std::size_t peak = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    en[k] = gaussian_log_negativity(states[k]);
    agree = agree && (simon_criterion(states[k]) == (en[k] > 0.0));
    if (en[k] > en[peak]) peak = k;
  }
  auto value = [&](const std::string& name, std::size_t k) -> double {
    const auto& v = states[k];
    using namespace quad;
    if (name == "photons") return covariance_photons(v);
    if (name == "cp") return v.momentum_correlation();
    if (name == "en") return en[k];
    if (name == "simon") return simon_criterion(v) ? 1.0 : 0.0;
    if (name == "var_p") return v.V(quad::p1, quad::p1);
    if (name == "cov_p") return v.V(quad::p1, quad::p2);
    throw std::logic_error("unhandled observable " + name);
  };
  out.write("timeseries.csv", timeseries_csv(grid, c.outputs.observables, value,
                                             [](const std::string&, std::size_t) { return 0.0; }));
  s["peak_en"] = en[peak];
  s["peak_en_time"] = grid[peak];
  s["final_en"] = en.back();
  s["simon_agrees"] = agree;
  set_gaussian_steady(s, p);
}

inline void run_gaussian_sweep(const ExperimentConfig& c, OutputDir& out, nlohmann::json& s) {
  const auto& sw = *c.sweep;
  CsvTable table({"omega", "kappa", "delta_c", "g", "cp", "cp_analytic", "cov_p", "var_p", "en", "tau"});
  double worst = 0.0, g_dep = 0.0;
  for (double omega : sw.omega)
    for (double kappa : sw.kappa) {
      std::vector<double> detunings = sw.delta_c;
      for (auto r : sw.delta_c_rules) detunings.push_back(resolve_detuning(r, omega, kappa));
      for (double dc : detunings) {
        double cp_first = kNaN;
        for (double g : sw.g) {
          OscillatorParams p = c.oscillator;
          p.omega = omega;
          p.kappa = kappa;
          p.delta_c = dc;
          p.g = g;
          p.validate();
          const auto ss = steady_state_covariance(build_drift_diffusion(p));
          const double cp = ss.momentum_correlation();
          const double exact = analytic_cp(omega, kappa, dc);
          worst = std::max(worst, std::abs(cp - exact));
          if (std::isnan(cp_first)) cp_first = cp;
          g_dep = std::max(g_dep, std::abs(cp - cp_first));
          table.add_numbers({omega, kappa, dc, g, cp, exact, ss.V(quad::p1, quad::p2), ss.V(quad::p1, quad::p1),
                             gaussian_log_negativity(ss), stokes_rates(p).tau});
        }
      }
    }
  out.write("sweep.csv", table.str());
  s["max_cp_residual"] = worst;
  s["max_g_dependence"] = g_dep;
}

inline void run_linearized_steady(const ExperimentConfig& c, const RunOptions& ro, OutputDir& out, nlohmann::json& s) {
  const auto& p = c.oscillator;
  p.validate();
  const auto space = oscillator_space(c.numerics.oscillator_cutoff, c.numerics.fock_cutoff);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto a = field_annihilation(space);
  if (ro.log) ro.log("relaxing the master equation on dimension " + std::to_string(space.total_dim()));
  const auto ss = steady_state(h, {cavity_decay(space, p.kappa)}, DensityMatrix::pure(basis_state(space, {0, 0, 0})), p);
  s["steady_time"] = ss.t_converged;
  s["steady_cp"] = number_or_null(cp_or_nan(momentum_correlation(ss.rho)));
  s["photons"] = expectation(ss.rho, a.adjoint() * a).real();
  s["g2"] = g2_zero(ss.rho, a);
  set_rates(s, p);
  out.write("steady_populations.csv", matrix_csv(joint_populations(partial_trace(ss.rho, {0, 1}))));
  if (c.experiment == Experiment::herald) {
    const auto heralded = partial_trace(conditional_density_matrix(ss.rho, a), {0, 1});
    s["heralded_cp"] = number_or_null(cp_or_nan(momentum_correlation(heralded)));
    s["heralded_en"] = log_negativity(heralded);
    out.write("heralded_populations.csv", matrix_csv(joint_populations(heralded)));
  }
}

}  // namespace detail

/// Runs the experiment and writes every output below `directory`, ending with
/// config.json and summary.json. Outputs depend only on the config.
inline RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& directory,
                                const RunOptions& ro = {}) {
  validate(c);
  detail::OutputDir out(directory);
  nlohmann::json scalars = detail::empty_scalars();
  switch (c.experiment) {
    case Experiment::ring_trajectory:
    case Experiment::ring_ensemble:
    case Experiment::linearized_ensemble: detail::run_particle_field(c, ro, out, scalars); break;
    case Experiment::toy_trajectory: detail::run_toy(c, ro, out, scalars); break;
    case Experiment::gaussian_evolve: detail::run_gaussian_evolve(c, out, scalars); break;
    case Experiment::gaussian_steady: c.oscillator.validate(); detail::set_gaussian_steady(scalars, c.oscillator); break;
    case Experiment::gaussian_sweep: detail::run_gaussian_sweep(c, out, scalars); break;
    case Experiment::linearized_steady:
    case Experiment::herald: detail::run_linearized_steady(c, ro, out, scalars); break;
  }
  const auto config = to_json(c);
  nlohmann::json summary = {{"schema_version", kSchemaVersion},
                            {"experiment", to_string(c.experiment)},
                            {"config", config},
                            {"scalars", scalars}};
  out.write("config.json", dump_json(config));
  out.write("summary.json", dump_json(summary));
  return {directory, summary, out.files()};
}

}  // namespace ringsim::cli
