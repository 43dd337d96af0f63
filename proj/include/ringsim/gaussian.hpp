#pragma once

// Gaussian-state engine for the linearized model.
//
// Quadratures xi = (x1, p1, x2, p2, X, P) with x = (b + b^dag)/sqrt(2) and
// p = (b - b^dag)/(i sqrt(2)); vacuum covariance is 1/2 * identity.

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "ringsim/errors.hpp"
#include "ringsim/models.hpp"
#include "ringsim/ode.hpp"

namespace ringsim {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix4d = Eigen::Matrix4d;

namespace quad {
inline constexpr int x1 = 0, p1 = 1, x2 = 2, p2 = 3, X = 4, P = 5;
}

/// Block-diagonal symplectic form with blocks [[0, 1], [-1, 0]].
inline Eigen::MatrixXd symplectic_form(Index modes) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * modes, 2 * modes);
  for (Index k = 0; k < modes; ++k) {
    w(2 * k, 2 * k + 1) = 1.0;
    w(2 * k + 1, 2 * k) = -1.0;
  }
  return w;
}

/// Symplectic eigenvalues of a symmetric 2n x 2n covariance matrix, ascending.
/// Computed from the spectrum of i S Omega S with S = V^{1/2}; throws if V
/// has a negative eigenvalue below -tol.
inline Eigen::VectorXd symplectic_eigenvalues(const Eigen::MatrixXd& v, double tol = 1e-10) {
  const Index n = v.rows() / 2;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (v + v.transpose()));
  if (es.eigenvalues().minCoeff() < -tol) throw std::invalid_argument("covariance matrix is not positive semidefinite");
  const Eigen::VectorXd sq = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd s = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXcd m = (kI * (s * symplectic_form(n) * s)).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hs(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  // Spectrum is {-nu_k, +nu_k}; the upper half (ascending) holds the nu_k.
  return hs.eigenvalues().tail(n);
}

struct CovarianceState {
  Vector6d mean = Vector6d::Zero();
  Matrix6d V = 0.5 * Matrix6d::Identity();

  static CovarianceState vacuum() { return {}; }

  double symmetry_defect() const { return (V - V.transpose()).cwiseAbs().maxCoeff(); }
  Eigen::VectorXd symplectic_spectrum() const { return symplectic_eigenvalues(V); }
  bool is_physical(double tol = 1e-8) const {
    if (symmetry_defect() > 1e-12) return false;
    try {
      return symplectic_spectrum().minCoeff() >= 0.5 - tol;
    } catch (const std::invalid_argument&) {
      return false;
    }
  }
  Matrix4d mechanical_block() const { return V.topLeftCorner<4, 4>(); }

  /// Cov(p1, p2) / sqrt(Var p1 Var p2).
  double momentum_correlation() const {
    return V(quad::p1, quad::p2) / std::sqrt(V(quad::p1, quad::p1) * V(quad::p2, quad::p2));
  }
};

enum class Stability { stable, marginal, unstable };

struct DriftDiffusion {
  Matrix6d A = Matrix6d::Zero();
  Matrix6d B = Matrix6d::Zero();

  /// stable: every eigenvalue of A has Re < 0; marginal: some have Re = 0
  /// (undamped normal modes, e.g. the mechanical mode the field does not see).
  Stability stability(double tol = 1e-9) const {
    Eigen::EigenSolver<Matrix6d> es(A, false);
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    const double worst = es.eigenvalues().real().maxCoeff();
    if (worst > tol * scale) return Stability::unstable;
    if (worst >= -tol * scale) return Stability::marginal;
    return Stability::stable;
  }
};

/// Heisenberg-Langevin drift and vacuum-input diffusion for
/// H = omega sum b^dag b - delta_c a^dag a + g sum (b + b^dag)(a + a^dag).
inline DriftDiffusion build_drift_diffusion(const OscillatorParams& p) {
  p.validate();
  using namespace quad;
  DriftDiffusion dd;
  auto& A = dd.A;
  A(x1, p1) = p.omega;
  A(p1, x1) = -p.omega;
  A(p1, X) = -2.0 * p.g;
  A(x2, p2) = p.omega;
  A(p2, x2) = -p.omega;
  A(p2, X) = -2.0 * p.g;
  A(X, X) = -p.kappa;
  A(X, P) = -p.delta_c;
  A(P, X) = p.delta_c;
  A(P, P) = -p.kappa;
  A(P, x1) = -2.0 * p.g;
  A(P, x2) = -2.0 * p.g;
  dd.B(X, X) = p.kappa;
  dd.B(P, P) = p.kappa;
  return dd;
}

inline Matrix6d lyapunov_rhs(const DriftDiffusion& dd, const Matrix6d& V) {
  return dd.A * V + V * dd.A.transpose() + dd.B;
}

namespace detail {

inline constexpr int kSymCoords = 21;

inline Eigen::Matrix<double, kSymCoords, 1> sym_to_vec(const Matrix6d& m) {
  Eigen::Matrix<double, kSymCoords, 1> v;
  int k = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) v(k++) = m(i, j);
  return v;
}

inline Matrix6d vec_to_sym(const Eigen::Matrix<double, kSymCoords, 1>& v) {
  Matrix6d m;
  int k = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) m(i, j) = m(j, i) = v(k++);
  return m;
}

}  // namespace detail

/// Solves A V + V A^T + B = 0 over the 21 independent entries of symmetric V.
///
/// When A has undamped modes the linear system is singular and its null
/// space holds conserved quadratic moments. Those are fixed to their values in
/// `reference` (the state the dynamics starts from, vacuum by default), which
/// is the state the covariance dynamics actually relaxes to.
inline CovarianceState steady_state_covariance(const DriftDiffusion& dd,
                                               const CovarianceState& reference = CovarianceState::vacuum()) {
  using Vec21 = Eigen::Matrix<double, detail::kSymCoords, 1>;
  using Mat21 = Eigen::Matrix<double, detail::kSymCoords, detail::kSymCoords>;
  if (dd.stability() == Stability::unstable)
    throw RegimeError("no steady state in the heating regime: drift matrix has an eigenvalue with positive real part");

  Mat21 L;
  int col = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) {
      Matrix6d e = Matrix6d::Zero();
      e(i, j) = e(j, i) = 1.0;
      L.col(col++) = detail::sym_to_vec(dd.A * e + e * dd.A.transpose());
    }
  const Vec21 b = detail::sym_to_vec(dd.B);

  Eigen::JacobiSVD<Mat21> svd(L, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = 1e-10 * std::max(1.0, sv(0));
  int rank = 0;
  while (rank < detail::kSymCoords && sv(rank) > cutoff) ++rank;

  Vec21 v;
  if (rank == detail::kSymCoords) {
    v = L.fullPivLu().solve(-b);
  } else {
    const int k = detail::kSymCoords - rank;
    const Eigen::MatrixXd U0 = svd.matrixU().rightCols(k);   // conserved functionals
    const Eigen::MatrixXd N = svd.matrixV().rightCols(k);    // free directions
    if ((U0.transpose() * b).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff()))
      throw RegimeError("no steady state in the heating regime: undamped mode receives diffusion");
    Vec21 vp = Vec21::Zero();
    for (int i = 0; i < rank; ++i) vp -= (svd.matrixU().col(i).dot(b) / sv(i)) * svd.matrixV().col(i);
    const Eigen::MatrixXd G = U0.transpose() * N;
    const Eigen::VectorXd rhs = U0.transpose() * (detail::sym_to_vec(reference.V) - vp);
    v = vp + N * G.fullPivLu().solve(rhs);
  }

  CovarianceState out;
  out.V = detail::vec_to_sym(v);
  const double residual = lyapunov_rhs(dd, out.V).cwiseAbs().maxCoeff();
  if (residual > 1e-10 * std::max(1.0, out.V.cwiseAbs().maxCoeff()))
    throw NumericalError("Lyapunov residual " + std::to_string(residual) + " exceeds tolerance");
  return out;
}

/// Integrates dV/dt = A V + V A^T + B and d<xi>/dt = A <xi> on the grid.
inline std::vector<CovarianceState> evolve_covariance(const DriftDiffusion& dd, const CovarianceState& v0,
                                                      const std::vector<double>& grid, OdeOptions opt = {}) {
  if (!v0.is_physical()) throw std::invalid_argument("initial covariance is not physical");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
  using State = Eigen::VectorXd;
  auto pack = [](const CovarianceState& c) {
    State y(42);
    y.head<6>() = c.mean;
    y.tail<36>() = Eigen::Map<const Eigen::Matrix<double, 36, 1>>(c.V.data());
    return y;
  };
  auto unpack = [](const State& y) {
    CovarianceState c;
    c.mean = y.head<6>();
    c.V = Eigen::Map<const Matrix6d>(y.data() + 6);
    return c;
  };
  auto rhs = [&dd](double, const State& y, State& dy) {
    dy.resize(42);
    const Eigen::Map<const Matrix6d> V(y.data() + 6);
    dy.head<6>() = dd.A * y.head<6>();
    Eigen::Map<Matrix6d>(dy.data() + 6) = dd.A * V + V * dd.A.transpose() + dd.B;
  };

  std::vector<CovarianceState> out;
  out.reserve(grid.size());
  if (grid.empty()) return out;
  DormandPrince<State> dp(rhs, opt);
  dp.reset(grid[0], pack(v0));
  out.push_back(v0);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    while (dp.time() < grid[k]) {
      dp.step(grid[k]);
      Eigen::Map<Matrix6d> V(dp.mutable_state().data() + 6);
      V = (0.5 * (V + V.transpose())).eval();
    }
    CovarianceState c = unpack(dp.state());
    const double nu_min = symplectic_eigenvalues(c.V, 1e-6).minCoeff();
    if (nu_min < 0.5 - 1e-6) {
      std::ostringstream os;
      os << "covariance lost physicality at t = " << grid[k] << ": smallest symplectic eigenvalue " << nu_min;
      throw NumericalError(os.str());
    }
    out.push_back(std::move(c));
  }
  return out;
}

/// Steady-state momentum correlation (kappa^2 + (delta_c + omega)^2) / (kappa^2 + (delta_c - omega)^2).
inline double analytic_cp(double omega, double kappa, double delta_c) {
  return (kappa * kappa + (delta_c + omega) * (delta_c + omega)) /
         (kappa * kappa + (delta_c - omega) * (delta_c - omega));
}

struct StokesRates {
  double gamma_plus = 0.0;   // anti-Stokes (cooling)
  double gamma_minus = 0.0;  // Stokes (heating)
  double tau = 0.0;          // 1 / (gamma_plus - gamma_minus)
};

inline StokesRates stokes_rates(const OscillatorParams& p) {
  const double g2k = p.g * p.g * p.kappa;
  StokesRates r;
  r.gamma_plus = g2k / (p.kappa * p.kappa + (p.delta_c + p.omega) * (p.delta_c + p.omega));
  r.gamma_minus = g2k / (p.kappa * p.kappa + (p.delta_c - p.omega) * (p.delta_c - p.omega));
  if (!(r.gamma_plus > r.gamma_minus))
    throw RegimeError("heating regime: anti-Stokes rate does not exceed Stokes rate, no relaxation time");
  r.tau = 1.0 / (r.gamma_plus - r.gamma_minus);
  return r;
}

/// Effective displacement-displacement coupling after eliminating the cavity.
inline double effective_coupling_upsilon(const OscillatorParams& p) {
  const double g2k = p.g * p.g * p.kappa;
  const double gp = g2k / (p.kappa * p.kappa + (p.delta_c + p.omega) * (p.delta_c + p.omega));
  const double gm = g2k / (p.kappa * p.kappa + (p.delta_c - p.omega) * (p.delta_c - p.omega));
  return -((p.delta_c - p.omega) / p.kappa * gm + (p.delta_c + p.omega) / p.kappa * gp);
}

namespace detail {

inline void require_physical_block(const Matrix4d& m, const char* who) {
  Eigen::VectorXd nu;
  try {
    nu = symplectic_eigenvalues(m, 1e-10);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument(std::string(who) + ": mechanical covariance block is not positive");
  }
  if (nu.minCoeff() < 0.5 - 1e-8)
    throw std::invalid_argument(std::string(who) + ": mechanical covariance block is unphysical");
}

inline Matrix4d partial_transpose_block(const Matrix4d& m) {
  Eigen::Vector4d flip(1.0, 1.0, 1.0, -1.0);
  return flip.asDiagonal() * m * flip.asDiagonal();
}

}  // namespace detail

/// Logarithmic negativity (base 2) between the two mechanical modes, field traced out.
inline double gaussian_log_negativity(const Matrix4d& mech) {
  detail::require_physical_block(mech, "gaussian_log_negativity");
  const double nu_minus = symplectic_eigenvalues(detail::partial_transpose_block(mech), 1e-10).minCoeff();
  return std::max(0.0, -std::log2(2.0 * nu_minus));
}

inline double gaussian_log_negativity(const CovarianceState& c) { return gaussian_log_negativity(c.mechanical_block()); }

/// PPT test through the local symplectic invariants of the 4x4 block:
///   det A det B + (1/4 - |det C|)^2 - tr(A J C J B J C^T J) >= (det A + det B)/4
/// holds for every separable state; returns true (entangled) when it fails.
inline bool simon_criterion(const Matrix4d& mech) {
  detail::require_physical_block(mech, "simon_criterion");
  const Eigen::Matrix2d a = mech.topLeftCorner<2, 2>();
  const Eigen::Matrix2d b = mech.bottomRightCorner<2, 2>();
  const Eigen::Matrix2d c = mech.topRightCorner<2, 2>();
  Eigen::Matrix2d j;
  j << 0.0, 1.0, -1.0, 0.0;
  const double lhs = a.determinant() * b.determinant() +
                     std::pow(0.25 - std::abs(c.determinant()), 2) -
                     (a * j * c * j * b * j * c.transpose() * j).trace();
  const double rhs = 0.25 * (a.determinant() + b.determinant());
  const double scale = std::max(1.0, a.determinant() * b.determinant());
  return lhs - rhs < -1e-12 * scale;
}

inline bool simon_criterion(const CovarianceState& c) { return simon_criterion(c.mechanical_block()); }

/// g2(0) of the field for a zero-mean Gaussian state: 2 + |<aa>|^2 / <a^dag a>^2.
inline double gaussian_field_g2(const CovarianceState& c) {
  using namespace quad;
  const double n = 0.5 * (c.V(X, X) + c.V(P, P) - 1.0);
  const std::complex<double> aa(0.5 * (c.V(X, X) - c.V(P, P)), c.V(X, P));
  if (!(n > 1e-15)) throw RegimeError("field is in vacuum; g2 undefined");
  return 2.0 + std::norm(aa) / (n * n);
}

}  // namespace ringsim
