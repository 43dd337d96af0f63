#include <gtest/gtest.h>

#include "ringsim/analysis.hpp"
#include "ringsim/gaussian.hpp"
#include "ringsim/master_equation.hpp"
#include "ringsim/mcwf.hpp"
#include "ringsim/models.hpp"

using namespace ringsim;

namespace {

const SpaceDescriptor& cavity() {
  static const SpaceDescriptor s({FockSpace{4}});
  return s;
}

Observable photon_number(const SparseOperator& a) {
  return {"photons", [a](const StateVector& psi) { return (a.matrix() * psi.amplitudes).squaredNorm(); }};
}

SparseOperator zero_hamiltonian(const SpaceDescriptor& s) { return {s, SparseMatrix(s.total_dim(), s.total_dim()), true}; }

}  // namespace

TEST(JumpChannel, DriftConsistency) {
  const double kappa = 3.0;
  const auto ch = cavity_decay(cavity(), kappa);
  const auto a = annihilation_operator(FockSpace{4});
  const Eigen::MatrixXcd expected = -kI * kappa * (a.adjoint() * a).dense();
  EXPECT_LE((ch.drift().dense() - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NO_THROW(JumpChannel(ch.op(), ch.drift()));
  EXPECT_THROW(JumpChannel(ch.op(), ch.drift() * 2.0), std::invalid_argument);
  EXPECT_THROW(cavity_decay(cavity(), 0.0), std::invalid_argument);
}

TEST(Trajectory, UnitaryWithoutChannels) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(3, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto psi0 = basis_state(space, {1, 0, 0});
  const auto grid = uniform_grid(0.0, 0.5, 25);
  const auto a = field_annihilation(space);
  TrajectoryOptions opt;
  opt.observables = {photon_number(a)};
  for (auto kind : {PropagatorKind::rk45, PropagatorKind::spectral}) {
    const auto rec = evolve_trajectory(h, {}, psi0, grid, 1, opt, kind);
    EXPECT_TRUE(rec.jump_times.empty());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Eigen::VectorXcd phases = (-kI * grid[k] * es.eigenvalues().cast<cplx>()).array().exp();
      const Eigen::VectorXcd exact = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint() * psi0.amplitudes;
      EXPECT_NEAR(exact.squaredNorm(), 1.0, 1e-12);
      EXPECT_NEAR(rec.series[0][k], (a.matrix() * exact).squaredNorm(), 1e-7);
    }
  }
}

TEST(Trajectory, SurvivalFollowsDecayLaw) {
  const double kappa = 2.0;
  const auto s = cavity();
  const auto psi0 = basis_state(s, {1});
  const std::vector<double> grid = {0.0, 1.0 / (2.0 * kappa)};
  const Dynamics dyn(zero_hamiltonian(s), {cavity_decay(s, kappa)});
  const int n = 2000;
  int survived = 0;
  for (int i = 0; i < n; ++i) survived += evolve_trajectory(dyn, psi0, grid, trajectory_seed(99, i)).jump_times.empty();
  const double frac = double(survived) / n;
  const double p = std::exp(-1.0);
  EXPECT_LE(std::abs(frac - p), 3.0 * std::sqrt(p * (1.0 - p) / n));
}

TEST(Trajectory, JumpRecordInvariants) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(3, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto psi0 = basis_state(space, {1, 1, 2});
  const auto grid = uniform_grid(0.0, 2.0, 20);
  TrajectoryOptions opt;
  opt.jump_observables = {{"norm", [](const StateVector& psi) { return psi.norm_squared(); }}};
  for (auto kind : {PropagatorKind::rk45, PropagatorKind::spectral}) {
    const Dynamics dyn(h, {cavity_decay(space, p.kappa)}, kind);
    std::size_t jumps = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto rec = evolve_trajectory(dyn, psi0, grid, seed, opt);
      jumps += rec.jump_times.size();
      for (std::size_t j = 0; j < rec.jump_times.size(); ++j) {
        EXPECT_GT(rec.jump_times[j], grid.front());
        EXPECT_LE(rec.jump_times[j], grid.back());
        if (j > 0) EXPECT_GT(rec.jump_times[j], rec.jump_times[j - 1]);
        EXPECT_LE(rec.jump_norm_residuals[j], kJumpNormTolerance);
        EXPECT_NEAR(rec.jump_values[j][0], 1.0, 1e-10);
      }
      EXPECT_TRUE(rec.final_state.is_normalized());
    }
    EXPECT_GT(jumps, 20u);
  }
}

TEST(Trajectory, PropagatorsAgreeForSameSeed) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(3, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto psi0 = basis_state(space, {0, 0, 2});
  const auto grid = uniform_grid(0.0, 1.0, 10);
  TrajectoryOptions opt;
  opt.observables = {photon_number(field_annihilation(space))};
  OdeOptions tight;
  tight.rtol = 1e-11;
  tight.atol = 1e-13;
  const auto a = evolve_trajectory(h, {cavity_decay(space, p.kappa)}, psi0, grid, 7, opt, PropagatorKind::rk45, tight);
  const auto b = evolve_trajectory(h, {cavity_decay(space, p.kappa)}, psi0, grid, 7, opt, PropagatorKind::spectral);
  ASSERT_EQ(a.jump_times.size(), b.jump_times.size());
  for (std::size_t j = 0; j < a.jump_times.size(); ++j) EXPECT_NEAR(a.jump_times[j], b.jump_times[j], 1e-5);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(a.series[0][k], b.series[0][k], 1e-5);
}

TEST(Trajectory, PreconditionsChecked) {
  const auto s = cavity();
  const Dynamics dyn(zero_hamiltonian(s), {cavity_decay(s, 1.0)});
  const auto psi = basis_state(s, {1});
  EXPECT_THROW(evolve_trajectory(dyn, StateVector(s, 2.0 * psi.amplitudes), {0.0, 1.0}, 1), std::invalid_argument);
  EXPECT_THROW(evolve_trajectory(dyn, psi, {0.0, 1.0, 1.0}, 1), std::invalid_argument);
  TrajectoryOptions opt;
  opt.snapshot_times = {0.5};
  EXPECT_THROW(evolve_trajectory(dyn, psi, {0.0, 1.0}, 1, opt), std::invalid_argument);
  const auto a = annihilation_operator(FockSpace{4});
  EXPECT_THROW(Dynamics(SparseOperator(s, a.matrix(), false), {}), std::invalid_argument);
}

TEST(Trajectory, ToyModelFirstJumpEntangles) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const int c = 4;
  const FockSpace f{c};
  const SpaceDescriptor s({f, f});
  const auto h = (embed(s, 0, number_operator(f)) + embed(s, 1, number_operator(f))) * p.omega;
  const cplx alpha = toy_field_amplitude(p);
  const JumpChannel ch(scattering_operator(c) * (std::sqrt(2.0 * p.kappa) * alpha));
  TrajectoryOptions opt;
  opt.jump_observables = {
      {"EN", [](const StateVector& psi) { return log_negativity(DensityMatrix::pure(psi)); }},
      {"cp", [](const StateVector& psi) { return momentum_correlation(psi).value(); }}};
  int seen = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto rec = evolve_trajectory(h, {ch}, basis_state(s, {0, 0}), uniform_grid(0.0, 20.0, 20), seed, opt);
    if (rec.jump_times.empty()) continue;
    ++seen;
    EXPECT_GT(rec.jump_values[0][0], 0.99);
    EXPECT_NEAR(rec.jump_values[0][1], 0.5, 0.02);
  }
  EXPECT_GT(seen, 5);
}

TEST(Ensemble, SingleTrajectoryMatchesDirectRun) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(3, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto psi0 = basis_state(space, {1, 0, 1});
  const auto grid = uniform_grid(0.0, 1.0, 10);
  EnsembleOptions opt;
  opt.trajectory.observables = {photon_number(field_annihilation(space))};
  const Dynamics dyn(h, {cavity_decay(space, p.kappa)});
  const auto ens = run_ensemble(dyn, psi0, grid, 1, 42, opt);
  const auto rec = evolve_trajectory(dyn, psi0, grid, trajectory_seed(42, 0), opt.trajectory);
  EXPECT_EQ(ens.mean[0], rec.series[0]);
  EXPECT_EQ(ens.trajectories[0].jump_times, rec.jump_times);
  for (double se : ens.stderr_[0]) EXPECT_EQ(se, 0.0);
}

TEST(Ensemble, DampedCavityMatchesExponential) {
  const double kappa = 1.0;
  const auto s = cavity();
  const auto a = annihilation_operator(FockSpace{4});
  EnsembleOptions opt;
  opt.trajectory.observables = {photon_number(a)};
  const auto grid = uniform_grid(0.0, 1.5, 15);
  const auto ens = run_ensemble(zero_hamiltonian(s), {cavity_decay(s, kappa)}, basis_state(s, {2}), grid, 800, 5, opt);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double exact = 2.0 * std::exp(-2.0 * kappa * grid[k]);
    EXPECT_LE(std::abs(ens.mean[0][k] - exact), 3.0 * ens.stderr_[0][k] + 1e-9) << "t = " << grid[k];
  }
}

TEST(Ensemble, DeterministicAcrossThreadCounts) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(3, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto grid = uniform_grid(0.0, 1.0, 10);
  EnsembleOptions opt;
  opt.trajectory.observables = {photon_number(field_annihilation(space))};
  opt.trajectory.snapshot_times = {grid[5], grid[10]};
  opt.reduced_factors = {0, 1};
  opt.herald = field_annihilation(space);
  const Dynamics dyn(h, {cavity_decay(space, p.kappa)});
  const auto psi0 = basis_state(space, {0, 0, 0});
  opt.threads = 1;
  const auto one = run_ensemble(dyn, psi0, grid, 24, 11, opt);
  opt.threads = 3;
  const auto three = run_ensemble(dyn, psi0, grid, 24, 11, opt);
  EXPECT_EQ(one.mean, three.mean);
  EXPECT_EQ(one.stderr_, three.stderr_);
  ASSERT_EQ(one.snapshots.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ((one.snapshots[i].reduced.matrix - three.snapshots[i].reduced.matrix).norm(), 0.0);
    EXPECT_EQ((one.snapshots[i].heralded->matrix - three.snapshots[i].heralded->matrix).norm(), 0.0);
    one.snapshots[i].reduced.validate();
    one.snapshots[i].heralded->validate();
  }
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(one.trajectories[i].jump_times, three.trajectories[i].jump_times);
}

TEST(Ensemble, JackknifeOfLinearStatisticEqualsStandardError) {
  const auto s = cavity();
  const auto a = annihilation_operator(FockSpace{4});
  EnsembleOptions opt;
  opt.trajectory.observables = {photon_number(a)};
  auto ens = run_ensemble(zero_hamiltonian(s), {cavity_decay(s, 1.0)}, basis_state(s, {3}), uniform_grid(0.0, 1.0, 4), 50, 3, opt);
  ens.add_derived("twice", {"photons"}, [](const std::vector<double>& m) { return 2.0 * m[0]; });
  for (std::size_t k = 0; k < ens.grid.size(); ++k) {
    EXPECT_NEAR(ens.mean_of("twice")[k], 2.0 * ens.mean_of("photons")[k], 1e-14);
    EXPECT_NEAR(ens.stderr_of("twice")[k], 2.0 * ens.stderr_of("photons")[k], 1e-12);
  }
  EXPECT_THROW(run_ensemble(zero_hamiltonian(s), {}, basis_state(s, {0}), {0.0, 1.0}, 0, 1), std::invalid_argument);
}

TEST(Ensemble, FailuresCarryTrajectoryIndex) {
  const auto s = cavity();
  OdeOptions starved;
  starved.max_steps = 1;
  const Dynamics dyn(build_linearized_hamiltonian(OscillatorParams{}, oscillator_space(2, 2)), {}, PropagatorKind::rk45, starved);
  try {
    run_ensemble(dyn, basis_state(oscillator_space(2, 2), {1, 0, 0}), uniform_grid(0.0, 5.0, 2), 2, 1);
    FAIL() << "expected a numerical failure";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("trajectory 0"), std::string::npos);
  }
}

TEST(MasterEquation, CavityDecayAndFixedPoint) {
  const double kappa = 1.5;
  const auto s = cavity();
  const auto a = annihilation_operator(FockSpace{4});
  const auto grid = uniform_grid(0.0, 1.0, 10);
  const auto res = integrate_master_equation(zero_hamiltonian(s), {cavity_decay(s, kappa)},
                                             DensityMatrix::pure(basis_state(s, {1})), grid);
  for (std::size_t k = 0; k < grid.size(); ++k)
    EXPECT_NEAR(expectation(res.states[k], a.adjoint() * a).real(), std::exp(-2.0 * kappa * grid[k]), 1e-6);
  EXPECT_LE(res.max_trace_drift, 1e-8);

  const auto h = number_operator(FockSpace{4}) * 20.0;
  const auto vac = DensityMatrix::pure(basis_state(s, {0}));
  const auto fixed = integrate_master_equation(h, {cavity_decay(s, kappa)}, vac, grid);
  for (const auto& rho : fixed.states) EXPECT_LE((rho.matrix - vac.matrix).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MasterEquation, DimensionGuard) {
  const SpaceDescriptor s({FockSpace{70}, FockSpace{70}});
  MasterEquationOptions opt;
  const DensityMatrix rho(SpaceDescriptor({FockSpace{2}}), Eigen::Matrix2cd::Identity() / 2.0);
  EXPECT_THROW(integrate_master_equation(identity_operator(s), {}, DensityMatrix(s, Eigen::MatrixXcd::Zero(1, 1)), {0.0}),
               std::invalid_argument);
  opt.max_dim = 1;
  EXPECT_THROW(integrate_master_equation(identity_operator(rho.space), {}, rho, {0.0, 1.0}, opt), std::invalid_argument);
}

TEST(SteadyState, UncoupledRelaxesToVacuum) {
  OscillatorParams p{30.0, 0.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(2, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto start = DensityMatrix::pure(basis_state(space, {0, 0, 2}));
  const auto res = steady_state(h, {cavity_decay(space, p.kappa)}, start, 1.0 / p.kappa);
  const auto vac = DensityMatrix::pure(basis_state(space, {0, 0, 0}));
  EXPECT_LE((res.rho.matrix - vac.matrix).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(steady_state(h, {cavity_decay(space, p.kappa)}, start, p), RegimeError);
}

TEST(SteadyState, IsLiouvillianFixedPoint) {
  const OscillatorParams p{30.0, 5.0, -25.0, 5.0, 0.1};
  const auto space = oscillator_space(3, 3);
  const auto h = build_linearized_hamiltonian(p, space);
  const std::vector<JumpChannel> ch = {cavity_decay(space, p.kappa)};
  const auto vac = DensityMatrix::pure(basis_state(space, {0, 0, 0}));
  const auto ss = steady_state(h, ch, vac, p);
  ss.rho.validate();
  // The steady state is a fixed point of the Liouvillian.
  const SparseMatrix l = liouvillian(h, ch);
  const Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(ss.rho.matrix.data(), ss.rho.matrix.size());
  EXPECT_LE((l * v).cwiseAbs().maxCoeff(), 1e-5);
  const auto field = field_annihilation(space);
  EXPECT_GT(expectation(ss.rho, field.adjoint() * field).real(), 0.0);
  EXPECT_LE(std::abs(expectation(ss.rho, field)), 1e-8);
}

TEST(SteadyState, LinearizedModelHasIncoherentField) {
  const OscillatorParams p{200.0, 5.0, -20.0, 100.0, 0.1};
  const auto space = oscillator_space(4, 4);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto ss = steady_state(h, {cavity_decay(space, p.kappa)}, DensityMatrix::pure(basis_state(space, {0, 0, 0})), p);
  const auto field = field_annihilation(space);
  const double n_ph = expectation(ss.rho, field.adjoint() * field).real();
  EXPECT_GT(n_ph, 0.0);
  EXPECT_TRUE(std::isfinite(n_ph));
  EXPECT_LE(std::abs(expectation(ss.rho, field)), 1e-8);
}

TEST(SteadyState, CorrelationMatchesLyapunovSolution) {
  const OscillatorParams p{200.0, 5.0, -20.0, 100.0, 0.1};
  const auto space = oscillator_space(4, 4);
  const auto h = build_linearized_hamiltonian(p, space);
  const auto ss = steady_state(h, {cavity_decay(space, p.kappa)}, DensityMatrix::pure(basis_state(space, {0, 0, 0})), p);
  const double lyapunov = steady_state_covariance(build_drift_diffusion(p)).momentum_correlation();
  EXPECT_NEAR(momentum_correlation(ss.rho).value(), lyapunov, 0.02);
}

