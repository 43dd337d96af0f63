#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "ringsim/gaussian.hpp"

using namespace ringsim;

namespace {

OscillatorParams fig6() { return OscillatorParams{200.0, 5.0, -20.0, 100.0, 0.1}; }
OscillatorParams fig7() { return OscillatorParams{30.0, 5.0, -25.0, 5.0, 0.1}; }

/// Two-mode squeezed vacuum on (x1, p1, x2, p2).
Matrix4d two_mode_squeezed(double r) {
  const double c = std::cosh(2.0 * r), s = std::sinh(2.0 * r);
  Matrix4d v = Matrix4d::Zero();
  v.diagonal().setConstant(0.5 * c);
  v(0, 2) = v(2, 0) = 0.5 * s;
  v(1, 3) = v(3, 1) = -0.5 * s;
  return v;
}

/// Random symplectic S = exp(Omega H) applied to a thermal state.
Matrix4d random_physical(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  Matrix4d h;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) h(i, j) = h(j, i) = g(rng);
  const Matrix4d omega = symplectic_form(2);
  const Matrix4d s = (omega * h).exp();
  std::uniform_real_distribution<double> u(0.0, 0.8);
  const double nu1 = 0.5 + u(rng), nu2 = 0.5 + u(rng);
  Eigen::Vector4d d;
  d << nu1, nu1, nu2, nu2;
  return s * d.asDiagonal() * s.transpose();
}

}  // namespace

TEST(DriftDiffusion, Entries) {
  const auto p = fig7();
  const auto dd = build_drift_diffusion(p);
  using namespace quad;
  EXPECT_EQ(dd.A(x1, p1), p.omega);
  EXPECT_EQ(dd.A(p1, x1), -p.omega);
  EXPECT_EQ(dd.A(p2, X), -2.0 * p.g);
  EXPECT_EQ(dd.A(X, P), -p.delta_c);
  EXPECT_EQ(dd.A(P, X), p.delta_c);
  EXPECT_EQ(dd.A(P, x1), -2.0 * p.g);
  EXPECT_EQ(dd.A(P, x2), -2.0 * p.g);
  EXPECT_EQ(dd.A(P, P), -p.kappa);
  EXPECT_EQ(dd.A(x1, X), 0.0);
  Vector6d b;
  b << 0, 0, 0, 0, p.kappa, p.kappa;
  EXPECT_EQ(Matrix6d(b.asDiagonal()), dd.B);
}

TEST(DriftDiffusion, VacuumStationaryWithoutCoupling) {
  auto p = fig6();
  p.g = 0.0;
  const auto dd = build_drift_diffusion(p);
  EXPECT_EQ(lyapunov_rhs(dd, CovarianceState::vacuum().V).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DriftDiffusion, RelativeModeIsUndamped) {
  EXPECT_EQ(build_drift_diffusion(fig6()).stability(), Stability::marginal);
  auto p = fig6();
  p.delta_c = 20.0;
  EXPECT_EQ(build_drift_diffusion(p).stability(), Stability::unstable);
}

TEST(SteadyState, MatchesAnalyticCorrelation) {
  for (const auto& p : {fig6(), fig7()}) {
    const auto ss = steady_state_covariance(build_drift_diffusion(p));
    EXPECT_NEAR(ss.momentum_correlation(), analytic_cp(p.omega, p.kappa, p.delta_c), 1e-9);
    EXPECT_LE(lyapunov_rhs(build_drift_diffusion(p), ss.V).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE(ss.is_physical());
    using namespace quad;
    EXPECT_NEAR(ss.V(p1, p2), ss.V(p1, p1) - 0.5, 1e-9);
    EXPECT_NEAR(ss.V(x1, x2), ss.V(x1, x1) - 0.5, 1e-9);
  }
}

TEST(SteadyState, EqualsLongTimeEvolutionFromVacuum) {
  const auto p = fig7();
  const auto dd = build_drift_diffusion(p);
  const double tau = stokes_rates(p).tau;
  const auto traj = evolve_covariance(dd, CovarianceState::vacuum(), uniform_grid(0.0, 60.0 * tau, 60));
  const auto ss = steady_state_covariance(dd);
  EXPECT_LE((traj.back().V - ss.V).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(SteadyState, HeatingRegimeRejected) {
  for (double dc : {0.0, 20.0}) {
    auto p = fig6();
    p.delta_c = dc;
    EXPECT_THROW(steady_state_covariance(build_drift_diffusion(p)), RegimeError);
    EXPECT_THROW(stokes_rates(p), RegimeError);
  }
}

TEST(AnalyticCp, StokesRatioAndFig6Value) {
  const auto p = fig6();
  const auto r = stokes_rates(p);
  EXPECT_NEAR(analytic_cp(p.omega, p.kappa, p.delta_c), r.gamma_minus / r.gamma_plus, 1e-14);
  EXPECT_NEAR(analytic_cp(200.0, 100.0, -20.0), 42400.0 / 58400.0, 1e-14);
  EXPECT_NEAR(r.tau, 1.0 / (r.gamma_plus - r.gamma_minus), 1e-12);
  EXPECT_EQ(analytic_cp(30.0, 5.0, 0.0), 1.0);
}

TEST(Upsilon, LiteralFormula) {
  const auto p = fig7();
  const double gp = p.g * p.g * p.kappa / (p.kappa * p.kappa + std::pow(p.delta_c + p.omega, 2));
  const double gm = p.g * p.g * p.kappa / (p.kappa * p.kappa + std::pow(p.delta_c - p.omega, 2));
  EXPECT_NEAR(effective_coupling_upsilon(p), -((p.delta_c - p.omega) * gm / p.kappa + (p.delta_c + p.omega) * gp / p.kappa), 1e-14);
}

TEST(Symplectic, VacuumAndThermal) {
  const auto nu = symplectic_eigenvalues(CovarianceState::vacuum().V);
  for (Index i = 0; i < nu.size(); ++i) EXPECT_NEAR(nu(i), 0.5, 1e-12);
  Matrix4d thermal = Matrix4d::Zero();
  thermal.diagonal() << 1.5, 1.5, 2.5, 2.5;
  const auto nt = symplectic_eigenvalues(thermal);
  EXPECT_NEAR(nt(0), 1.5, 1e-12);
  EXPECT_NEAR(nt(1), 2.5, 1e-12);
  const auto tms = symplectic_eigenvalues(two_mode_squeezed(0.7));
  EXPECT_NEAR(tms(0), 0.5, 1e-10);
  EXPECT_NEAR(tms(1), 0.5, 1e-10);
}

TEST(GaussianLogNegativity, TwoModeSqueezed) {
  for (double r : {0.0, 0.1, 0.5, 1.0}) {
    EXPECT_NEAR(gaussian_log_negativity(two_mode_squeezed(r)), 2.0 * r / std::log(2.0), 1e-9);
    EXPECT_EQ(simon_criterion(two_mode_squeezed(r)), r > 0.0);
  }
  Matrix4d bad = Matrix4d::Identity() * 0.3;
  EXPECT_THROW(gaussian_log_negativity(bad), std::invalid_argument);
  EXPECT_THROW(simon_criterion(bad), std::invalid_argument);
}

TEST(GaussianLogNegativity, SimonAgreesOnRandomStates) {
  std::mt19937_64 rng(2024);
  int entangled = 0;
  for (int i = 0; i < 400; ++i) {
    const Matrix4d v = random_physical(rng);
    const double en = gaussian_log_negativity(v);
    if (en > 0.0 && en < 1e-9) continue;  // boundary
    EXPECT_EQ(simon_criterion(v), en > 0.0) << "sample " << i << " E_N = " << en;
    entangled += en > 0.0;
  }
  EXPECT_GT(entangled, 10);
  EXPECT_LT(entangled, 390);
}

TEST(EvolveCovariance, FreeRotationOfMeans) {
  auto p = fig7();
  p.g = 0.0;
  CovarianceState v0;
  v0.mean(quad::x1) = 1.0;
  const auto grid = uniform_grid(0.0, 0.3, 30);
  const auto out = evolve_covariance(build_drift_diffusion(p), v0, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_NEAR(out[k].mean(quad::x1), std::cos(p.omega * grid[k]), 1e-7);
    EXPECT_NEAR(out[k].mean(quad::p1), -std::sin(p.omega * grid[k]), 1e-7);
    EXPECT_LE(out[k].symmetry_defect(), 0.0);
  }
}

TEST(EvolveCovariance, RejectsUnphysicalStart) {
  CovarianceState v;
  v.V *= 0.5;
  EXPECT_THROW(evolve_covariance(build_drift_diffusion(fig7()), v, uniform_grid(0.0, 1.0, 2)), std::invalid_argument);
}

TEST(FieldG2, ThermalField) {
  CovarianceState c;
  c.V(quad::X, quad::X) = c.V(quad::P, quad::P) = 1.7;
  EXPECT_NEAR(gaussian_field_g2(c), 2.0, 1e-14);
  EXPECT_THROW(gaussian_field_g2(CovarianceState::vacuum()), RegimeError);
}
