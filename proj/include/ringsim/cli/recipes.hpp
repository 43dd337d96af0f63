#pragma once

#include <string>
#include <vector>

#include "ringsim/cli/config.hpp"

namespace ringsim::cli {

struct Recipe {
  std::string name;
  std::string figure;
  std::string description;
  std::string runtime;
  ExperimentConfig config;
};

namespace detail {

inline ExperimentConfig ring_desk(Experiment e, std::uint64_t seed) {
  ExperimentConfig c;
  c.experiment = e;
  c.ring = RingParams{};
  c.numerics.momentum_cutoff = 12;
  c.numerics.fock_cutoff = 6;
  c.numerics.t_final = 3000.0;
  c.numerics.base_seed = seed;
  return c;
}

inline ExperimentConfig oscillator_run(Experiment e, const OscillatorParams& p) {
  ExperimentConfig c;
  c.experiment = e;
  c.oscillator = p;
  return c;
}

inline const OscillatorParams kGaussianRegime{200.0, 5.0, -20.0, 100.0, 0.1};
inline const OscillatorParams kTransientRegime{30.0, 5.0, -25.0, 5.0, 0.1};

}  // namespace detail

inline std::vector<Recipe> recipes() {
  std::vector<Recipe> out;
  {
    auto c = detail::ring_desk(Experiment::ring_trajectory, 20);
    c.numerics.n_steps = 150;
    c.numerics.max_jump_evaluations = 100;
    c.outputs.observables = {"photons", "cp", "en", "leakage"};
    out.push_back({"fig2-desk", "figure 2",
                   "single ring trajectory: photon number, C_p, E_N and jump times",
                   "about 1 minute", c});
  }
  {
    auto c = detail::ring_desk(Experiment::ring_ensemble, 40);
    c.numerics.n_traj = 100;
    c.outputs.observables = {"photons", "cp", "leakage"};
    c.outputs.snapshot_times = {0.0, 1500.0, 3000.0};
    out.push_back({"fig4-ensemble", "figure 4",
                   "100-trajectory ring ensemble: ensemble C_p and momentum distributions",
                   "about 5 minutes", c});
  }
  {
    auto c = detail::ring_desk(Experiment::ring_ensemble, 50);
    c.numerics.n_traj = 100;
    c.outputs.observables = {"photons", "cp", "heralded_cp", "leakage"};
    c.outputs.snapshot_times = {1500.0, 1800.0, 2100.0, 2400.0, 2700.0, 3000.0};
    out.push_back({"fig5-herald", "figure 5",
                   "100-trajectory ring ensemble heralded on a photon detection",
                   "about 10 minutes", c});
  }
  {
    auto c = detail::oscillator_run(Experiment::gaussian_evolve, detail::kGaussianRegime);
    c.numerics.t_final = 600.0;
    c.numerics.n_steps = 200;
    c.outputs.observables = {"photons", "cp", "en", "simon", "var_p", "cov_p"};
    out.push_back({"fig6-gauss", "figure 6",
                   "covariance evolution from vacuum in the Gaussian regime; steady C_p from the Lyapunov solve",
                   "seconds", c});
  }
  {
    auto c = detail::oscillator_run(Experiment::herald, detail::kGaussianRegime);
    c.numerics.oscillator_cutoff = 6;
    c.numerics.fock_cutoff = 4;
    out.push_back({"fig6-herald", "figure 6",
                   "master-equation steady state of the linearized model and its heralded state",
                   "about 1 minute", c});
  }
  {
    auto c = detail::oscillator_run(Experiment::gaussian_evolve, detail::kTransientRegime);
    c.numerics.t_final = 4.0;
    c.numerics.n_steps = 200;
    c.outputs.observables = {"photons", "cp", "en", "simon", "var_p", "cov_p"};
    out.push_back({"fig7-transient", "figure 7",
                   "transient entanglement of the covariance evolution from vacuum", "seconds", c});
  }
  {
    auto c = detail::oscillator_run(Experiment::toy_trajectory, detail::kTransientRegime);
    c.numerics.oscillator_cutoff = 3;
    c.numerics.t_final = 20.0;
    c.numerics.n_steps = 100;
    c.numerics.base_seed = 7;
    c.numerics.max_jump_evaluations = 10;
    out.push_back({"toy-demo", "toy model",
                   "two oscillators driven only by scattering: Bell state after the first jump", "seconds", c});
  }
  for (auto& r : out) {
    r.config.outputs.directory = "out/" + r.name;
    if (r.config.outputs.observables.empty()) r.config.outputs.observables = default_observables(r.config.experiment);
    validate(r.config);
  }
  return out;
}

inline Recipe find_recipe(const std::string& name) {
  for (auto& r : recipes())
    if (r.name == name) return r;
  throw ConfigError("unknown recipe '" + name + "'");
}

}  // namespace ringsim::cli
