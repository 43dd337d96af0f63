#pragma once

// Monte Carlo wavefunction unravelling of
//   d rho / dt = -i [H, rho] + sum_c (J_c rho J_c^dag - 1/2 {J_c^dag J_c, rho})
// and seeded, order-deterministic trajectory ensembles.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ringsim/errors.hpp"
#include "ringsim/hilbert.hpp"
#include "ringsim/propagator.hpp"
#include "ringsim/rng.hpp"

namespace ringsim {

/// Jump operator J together with its no-jump drift -(i/2) J^dag J.
class JumpChannel {
 public:
  explicit JumpChannel(SparseOperator op) : op_(std::move(op)), drift_(expected_drift(op_)) {}

  /// Checks that `drift` is -(i/2) J^dag J within 1e-12.
  JumpChannel(SparseOperator op, SparseOperator drift) : op_(std::move(op)), drift_(std::move(drift)) {
    require_same_space(op_.space(), drift_.space(), "jump channel");
    const SparseMatrix diff = drift_.matrix() - expected_drift(op_).matrix();
    double worst = 0.0;
    for (Index c = 0; c < diff.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(diff, c); it; ++it) worst = std::max(worst, std::abs(it.value()));
    if (worst > 1e-12) throw std::invalid_argument("jump channel drift is not -(i/2) J^dag J");
  }

  const SparseOperator& op() const { return op_; }
  const SparseOperator& drift() const { return drift_; }
  const SpaceDescriptor& space() const { return op_.space(); }

 private:
  static SparseOperator expected_drift(const SparseOperator& j) { return (j.adjoint() * j) * cplx(0.0, -0.5); }

  SparseOperator op_;
  SparseOperator drift_;
};

/// sqrt(2 kappa) a on the last (field) factor; drift -i kappa a^dag a.
inline JumpChannel cavity_decay(const SpaceDescriptor& space, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("cavity decay needs kappa > 0");
  const auto& f = space.factor(space.num_factors() - 1);
  if (!is_fock(f)) throw std::invalid_argument("cavity decay: last factor must be a Fock space");
  return JumpChannel(embed(space, space.num_factors() - 1, annihilation_operator(std::get<FockSpace>(f))) *
                     std::sqrt(2.0 * kappa));
}

inline SparseMatrix effective_hamiltonian(const SparseOperator& h, const std::vector<JumpChannel>& channels) {
  SparseMatrix heff = h.matrix();
  for (const auto& c : channels) {
    require_same_space(h.space(), c.space(), "effective Hamiltonian");
    heff += c.drift().matrix();
  }
  heff.makeCompressed();
  return heff;
}

/// Named scalar evaluated on a normalized state.
struct Observable {
  std::string name;
  std::function<double(const StateVector&)> eval;
};

/// Immutable problem data shared by every trajectory of an ensemble.
class Dynamics {
 public:
  Dynamics(const SparseOperator& h, std::vector<JumpChannel> channels, PropagatorKind kind = PropagatorKind::rk45,
           OdeOptions ode = {})
      : space_(h.space()), channels_(std::move(channels)), kind_(kind), ode_(ode) {
    if (!h.is_hermitian()) throw std::invalid_argument("Hamiltonian must be Hermitian");
    heff_ = std::make_shared<const SparseMatrix>(effective_hamiltonian(h, channels_));
    if (kind_ == PropagatorKind::spectral) spectral_ = std::make_shared<const SpectralDecomposition>(*heff_);
  }

  const SpaceDescriptor& space() const { return space_; }
  const std::vector<JumpChannel>& channels() const { return channels_; }
  PropagatorKind kind() const { return kind_; }

  std::unique_ptr<Propagator> make_propagator() const {
    if (kind_ == PropagatorKind::spectral) return std::make_unique<SpectralPropagator>(spectral_);
    return std::make_unique<RkPropagator>(heff_, ode_);
  }

 private:
  SpaceDescriptor space_;
  std::vector<JumpChannel> channels_;
  PropagatorKind kind_;
  OdeOptions ode_;
  std::shared_ptr<const SparseMatrix> heff_;
  std::shared_ptr<const SpectralDecomposition> spectral_;
};

struct TrajectoryOptions {
  std::vector<Observable> observables;        // sampled on the grid
  std::vector<Observable> jump_observables;   // sampled on each post-jump state
  std::size_t max_jump_evaluations = std::numeric_limits<std::size_t>::max();
  std::vector<double> snapshot_times;         // grid times at which the state is kept
};

inline constexpr double kJumpNormTolerance = 1e-6;
inline constexpr double kNormGrowthTolerance = 1e-8;

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::vector<double> grid;
  std::vector<std::string> names;
  std::vector<std::vector<double>> series;     // [observable][grid index]
  std::vector<double> jump_times;
  std::vector<std::size_t> jump_channels;
  std::vector<std::string> jump_names;
  std::vector<std::vector<double>> jump_values;  // [jump][jump observable]; empty beyond the evaluation limit
  std::vector<double> jump_norm_residuals;       // | ||psi(t_j)||^2 - r | per jump
  std::vector<StateVector> snapshots;
  StateVector final_state;

  const std::vector<double>& observable(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return series[k];
    throw std::out_of_range("no observable named " + name);
  }
};

namespace detail {

inline void require_increasing(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("time grid is empty");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
}

inline std::vector<std::size_t> snapshot_indices(const std::vector<double>& grid, const std::vector<double>& times) {
  std::vector<std::size_t> out;
  for (double t : times) {
    const auto it = std::find_if(grid.begin(), grid.end(), [t](double g) { return std::abs(g - t) <= 1e-12 * std::max(1.0, std::abs(t)); });
    if (it == grid.end()) throw std::invalid_argument("snapshot time " + std::to_string(t) + " is not a grid point");
    out.push_back(std::size_t(it - grid.begin()));
  }
  return out;
}

/// Locates t in [lo, hi] with ||psi(t)||^2 = r. Regula falsi with the Illinois
/// modification keeps the bracket; the norm is monotone on the interval.
inline std::pair<double, Eigen::VectorXcd> locate_jump(Propagator& prop, double lo, double n_lo, double hi,
                                                       double n_hi, double r) {
  Eigen::VectorXcd psi = prop.state_within_last(hi);
  double best = std::abs(n_hi - r), t_best = hi;
  Eigen::VectorXcd psi_best = psi;
  int side = 0;
  for (int it = 0; it < 200 && best > kJumpNormTolerance; ++it) {
    double t = (n_lo - r) != (n_hi - r) ? lo + (hi - lo) * (n_lo - r) / (n_lo - n_hi) : 0.5 * (lo + hi);
    if (!(t > lo && t < hi) || it % 8 == 7) t = 0.5 * (lo + hi);
    psi = prop.state_within_last(t);
    const double n = psi.squaredNorm();
    if (std::abs(n - r) < best) {
      best = std::abs(n - r);
      t_best = t;
      psi_best = psi;
    }
    if (n > r) {
      lo = t;
      n_lo = n;
      if (side == -1) n_hi = r + 0.5 * (n_hi - r);
      side = -1;
    } else {
      hi = t;
      n_hi = n;
      if (side == 1) n_lo = r + 0.5 * (n_lo - r);
      side = 1;
    }
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) break;
  }
  if (best > kJumpNormTolerance)
    throw NumericalError("jump-time location did not reach the norm tolerance (residual " + std::to_string(best) + ")");
  return {t_best, std::move(psi_best)};
}

}  // namespace detail

inline TrajectoryRecord evolve_trajectory(const Dynamics& dyn, const StateVector& psi0, const std::vector<double>& grid,
                                          std::uint64_t seed, const TrajectoryOptions& opt = {}) {
  require_same_space(dyn.space(), psi0.space, "evolve_trajectory");
  if (!psi0.is_normalized()) throw std::invalid_argument("initial state must be normalized");
  detail::require_increasing(grid);
  const auto snap_idx = detail::snapshot_indices(grid, opt.snapshot_times);

  TrajectoryRecord rec;
  rec.seed = seed;
  rec.grid = grid;
  for (const auto& o : opt.observables) rec.names.push_back(o.name);
  for (const auto& o : opt.jump_observables) rec.jump_names.push_back(o.name);
  rec.series.assign(opt.observables.size(), std::vector<double>(grid.size()));

  UniformSource uniform(seed);
  double r = uniform();
  auto prop = dyn.make_propagator();
  prop->reset(grid[0], psi0.amplitudes);

  StateVector normalized = psi0;
  auto sample = [&](std::size_t k) {
    normalized.amplitudes = prop->state();
    normalized.normalize();
    for (std::size_t o = 0; o < opt.observables.size(); ++o) rec.series[o][k] = opt.observables[o].eval(normalized);
    if (std::find(snap_idx.begin(), snap_idx.end(), k) != snap_idx.end()) rec.snapshots.push_back(normalized);
  };
  sample(0);

  const auto& channels = dyn.channels();
  double norm_prev = 1.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    while (prop->time() < grid[k]) {
      const double t_start = prop->time();
      prop->advance(grid[k]);
      const double n = prop->state().squaredNorm();
      if (n > norm_prev + kNormGrowthTolerance)
        throw NumericalError("norm increased by " + std::to_string(n - norm_prev) + " in one step at t = " +
                             std::to_string(prop->time()) + "; drift term has the wrong sign");
      if (n > r) {
        norm_prev = n;
        continue;
      }
      auto [tj, psi] = detail::locate_jump(*prop, t_start, norm_prev, prop->time(), n, r);
      rec.jump_norm_residuals.push_back(std::abs(psi.squaredNorm() - r));

      std::vector<double> weights(channels.size());
      std::vector<Eigen::VectorXcd> kicked(channels.size());
      double total = 0.0;
      for (std::size_t c = 0; c < channels.size(); ++c) {
        kicked[c] = channels[c].op().matrix() * psi;
        weights[c] = kicked[c].squaredNorm();
        total += weights[c];
      }
      if (!(total > 0.0)) throw NumericalError("norm decayed but every jump channel has zero weight");
      double u = uniform() * total;
      std::size_t chosen = channels.size() - 1;
      for (std::size_t c = 0; c < channels.size(); ++c) {
        if (u < weights[c]) {
          chosen = c;
          break;
        }
        u -= weights[c];
      }
      StateVector post(psi0.space, kicked[chosen]);
      post.normalize();
      rec.jump_times.push_back(tj);
      rec.jump_channels.push_back(chosen);
      std::vector<double> values;
      if (rec.jump_times.size() <= opt.max_jump_evaluations)
        for (const auto& o : opt.jump_observables) values.push_back(o.eval(post));
      rec.jump_values.push_back(std::move(values));

      prop->reset(tj, post.amplitudes);
      norm_prev = 1.0;
      r = uniform();
    }
    sample(k);
  }
  rec.final_state = normalized;
  return rec;
}

inline TrajectoryRecord evolve_trajectory(const SparseOperator& h, const std::vector<JumpChannel>& channels,
                                          const StateVector& psi0, const std::vector<double>& grid, std::uint64_t seed,
                                          const TrajectoryOptions& opt = {}, PropagatorKind kind = PropagatorKind::rk45,
                                          OdeOptions ode = {}) {
  return evolve_trajectory(Dynamics(h, channels, kind, ode), psi0, grid, seed, opt);
}

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleOptions {
  TrajectoryOptions trajectory;
  unsigned threads = 1;                        // 0: hardware concurrency
  std::vector<std::size_t> reduced_factors;    // factors kept in density snapshots
  std::optional<SparseOperator> herald;        // field operator a for heralded snapshots
};

struct EnsembleSnapshot {
  double t = 0.0;
  DensityMatrix reduced;                   // trajectory average of Tr_rest |psi><psi|
  std::optional<DensityMatrix> heralded;   // sum Tr_rest a|psi><psi|a^dag / sum ||a psi||^2
  double photon_number = 0.0;              // average ||a psi||^2
};

struct EnsembleRecord {
  std::size_t n_traj = 0;
  std::uint64_t base_seed = 0;
  std::vector<double> grid;
  std::vector<std::string> names;
  std::vector<std::vector<double>> mean;    // [observable][grid index]
  std::vector<std::vector<double>> stderr_;  // [observable][grid index]
  std::vector<EnsembleSnapshot> snapshots;
  std::vector<TrajectoryRecord> trajectories;  // snapshot states dropped after reduction

  std::size_t index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return k;
    throw std::out_of_range("no ensemble observable named " + name);
  }
  const std::vector<double>& mean_of(const std::string& name) const { return mean[index_of(name)]; }
  const std::vector<double>& stderr_of(const std::string& name) const { return stderr_[index_of(name)]; }

  /// Adds f(ensemble means of `inputs`) as a new series with a delete-one
  /// jackknife standard error. f may return NaN where it is undefined.
  void add_derived(const std::string& name, const std::vector<std::string>& inputs,
                   const std::function<double(const std::vector<double>&)>& f) {
    std::vector<std::size_t> idx;
    for (const auto& in : inputs) idx.push_back(index_of(in));
    std::vector<double> m(grid.size()), se(grid.size(), 0.0);
    const double n = double(n_traj);
    std::vector<double> args(idx.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      for (std::size_t a = 0; a < idx.size(); ++a) args[a] = mean[idx[a]][k];
      m[k] = f(args);
      if (n_traj < 2) continue;
      double acc = 0.0, loo_mean = 0.0;
      std::vector<double> loo(n_traj);
      for (std::size_t i = 0; i < n_traj; ++i) {
        for (std::size_t a = 0; a < idx.size(); ++a)
          args[a] = (n * mean[idx[a]][k] - trajectories[i].series[idx[a]][k]) / (n - 1.0);
        loo[i] = f(args);
        loo_mean += loo[i];
      }
      loo_mean /= n;
      for (double v : loo) acc += (v - loo_mean) * (v - loo_mean);
      se[k] = std::sqrt((n - 1.0) / n * acc);
    }
    names.push_back(name);
    mean.push_back(std::move(m));
    stderr_.push_back(std::move(se));
  }
};

namespace detail {

[[noreturn]] inline void rethrow_with_index(std::exception_ptr ep, std::size_t index) {
  const std::string prefix = "trajectory " + std::to_string(index) + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const RegimeError& e) {
    throw RegimeError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace detail

/// Runs n_traj trajectories with seeds trajectory_seed(base_seed, i). Work is
/// spread over threads; every reduction runs afterwards in index order, so the
/// record does not depend on the thread count.
inline EnsembleRecord run_ensemble(const Dynamics& dyn, const StateVector& psi0, const std::vector<double>& grid,
                                   std::size_t n_traj, std::uint64_t base_seed, const EnsembleOptions& opt = {}) {
  if (n_traj < 1) throw std::invalid_argument("ensemble needs at least one trajectory");
  detail::require_increasing(grid);
  if (opt.herald) require_same_space(dyn.space(), opt.herald->space(), "herald operator");
  const bool want_density = !opt.reduced_factors.empty() && !opt.trajectory.snapshot_times.empty();

  std::vector<TrajectoryRecord> records(n_traj);
  std::vector<std::exception_ptr> errors(n_traj);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n_traj;) {
      try {
        records[i] = evolve_trajectory(dyn, psi0, grid, trajectory_seed(base_seed, i), opt.trajectory);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
  threads = unsigned(std::min<std::size_t>(threads, n_traj));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < n_traj; ++i)
    if (errors[i]) detail::rethrow_with_index(errors[i], i);

  EnsembleRecord ens;
  ens.n_traj = n_traj;
  ens.base_seed = base_seed;
  ens.grid = grid;
  ens.names = records[0].names;
  const std::size_t n_obs = ens.names.size();
  ens.mean.assign(n_obs, std::vector<double>(grid.size(), 0.0));
  ens.stderr_.assign(n_obs, std::vector<double>(grid.size(), 0.0));
  for (const auto& rec : records)
    for (std::size_t o = 0; o < n_obs; ++o)
      for (std::size_t k = 0; k < grid.size(); ++k) ens.mean[o][k] += rec.series[o][k];
  const double n = double(n_traj);
  for (auto& m : ens.mean)
    for (auto& v : m) v /= n;
  if (n_traj > 1)
    for (std::size_t o = 0; o < n_obs; ++o)
      for (std::size_t k = 0; k < grid.size(); ++k) {
        double acc = 0.0;
        for (const auto& rec : records) acc += (rec.series[o][k] - ens.mean[o][k]) * (rec.series[o][k] - ens.mean[o][k]);
        ens.stderr_[o][k] = std::sqrt(acc / (n - 1.0) / n);
      }

  if (want_density) {
    const auto& times = opt.trajectory.snapshot_times;
    for (std::size_t s = 0; s < times.size(); ++s) {
      EnsembleSnapshot snap;
      snap.t = times[s];
      Eigen::MatrixXcd acc, acc_h;
      double weight = 0.0;
      for (const auto& rec : records) {
        const StateVector& psi = rec.snapshots[s];
        const auto red = reduced_density_matrix(psi, opt.reduced_factors);
        if (acc.size() == 0) {
          snap.reduced = DensityMatrix(red.space, Eigen::MatrixXcd::Zero(red.matrix.rows(), red.matrix.cols()));
          acc = Eigen::MatrixXcd::Zero(red.matrix.rows(), red.matrix.cols());
          acc_h = acc;
        }
        acc += red.matrix;
        if (opt.herald) {
          const StateVector kicked(psi.space, opt.herald->matrix() * psi.amplitudes);
          weight += kicked.norm_squared();
          acc_h += reduced_density_matrix(kicked, opt.reduced_factors).matrix;
        }
      }
      acc /= n;
      snap.reduced.matrix = 0.5 * (acc + acc.adjoint());
      if (opt.herald) {
        snap.photon_number = weight / n;
        if (weight > 0.0) {
          acc_h /= weight;
          snap.heralded = DensityMatrix(snap.reduced.space, 0.5 * (acc_h + acc_h.adjoint()));
        }
      }
      ens.snapshots.push_back(std::move(snap));
    }
  }
  for (auto& rec : records) rec.snapshots.clear();
  ens.trajectories = std::move(records);
  return ens;
}

inline EnsembleRecord run_ensemble(const SparseOperator& h, const std::vector<JumpChannel>& channels,
                                   const StateVector& psi0, const std::vector<double>& grid, std::size_t n_traj,
                                   std::uint64_t base_seed, const EnsembleOptions& opt = {},
                                   PropagatorKind kind = PropagatorKind::rk45, OdeOptions ode = {}) {
  return run_ensemble(Dynamics(h, channels, kind, ode), psi0, grid, n_traj, base_seed, opt);
}

}  // namespace ringsim
