#pragma once

// Dense density-matrix integration of the Lindblad equation, used as the
// small-scale oracle for trajectory ensembles, and its steady state.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include "ringsim/errors.hpp"
#include "ringsim/gaussian.hpp"
#include "ringsim/hilbert.hpp"
#include "ringsim/mcwf.hpp"
#include "ringsim/ode.hpp"

namespace ringsim {

inline constexpr Index kMasterEquationMaxDim = 4096;

struct MasterEquationOptions {
  OdeOptions ode;
  Index max_dim = kMasterEquationMaxDim;
};

struct MasterEquationResult {
  std::vector<DensityMatrix> states;   // one per grid time
  double max_trace_drift = 0.0;        // largest |Tr rho - 1| seen before renormalization
  int renormalizations = 0;
};

namespace detail {

inline void require_dense_dim(Index dim, Index max_dim) {
  if (dim > max_dim)
    throw std::invalid_argument("dense density matrix of dimension " + std::to_string(dim) +
                                " exceeds the guard " + std::to_string(max_dim));
}

}  // namespace detail

inline MasterEquationResult integrate_master_equation(const SparseOperator& h, const std::vector<JumpChannel>& channels,
                                                      const DensityMatrix& rho0, const std::vector<double>& grid,
                                                      const MasterEquationOptions& opt = {}) {
  require_same_space(h.space(), rho0.space, "integrate_master_equation");
  detail::require_dense_dim(rho0.space.total_dim(), opt.max_dim);
  if (!h.is_hermitian()) throw std::invalid_argument("Hamiltonian must be Hermitian");
  const SparseMatrix heff = effective_hamiltonian(h, channels);
  std::vector<SparseMatrix> jumps, jumps_adj;
  for (const auto& c : channels) {
    jumps.push_back(c.op().matrix());
    jumps_adj.push_back(SparseMatrix(c.op().matrix().adjoint()));
  }

  // d rho = X + X^dag + sum J rho J^dag with X = -i H_eff rho.
  auto rhs = [&](double, const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& d) {
    d.noalias() = heff * rho;
    d *= -kI;
    d += d.adjoint().eval();
    for (std::size_t c = 0; c < jumps.size(); ++c) {
      const Eigen::MatrixXcd jr = jumps[c] * rho;
      d.noalias() += jr * jumps_adj[c];
    }
  };

  MasterEquationResult res;
  res.states.reserve(grid.size());
  integrate_on_grid<Eigen::MatrixXcd>(rhs, rho0.matrix, grid, opt.ode, [&](std::size_t, double, Eigen::MatrixXcd& rho) {
    const cplx tr = rho.trace();
    const double drift = std::abs(tr - 1.0);
    res.max_trace_drift = std::max(res.max_trace_drift, drift);
    if (drift > 1e-8) {
      rho /= tr;
      ++res.renormalizations;
    }
    rho = (0.5 * (rho + rho.adjoint())).eval();
    res.states.emplace_back(rho0.space, rho);
  });
  return res;
}

/// Column-stacked Liouvillian: vec(A X B) = (B^T kron A) vec(X).
inline SparseMatrix liouvillian(const SparseOperator& h, const std::vector<JumpChannel>& channels) {
  const SparseMatrix heff = effective_hamiltonian(h, channels);
  const Index n = heff.rows();
  SparseMatrix id(n, n);
  id.setIdentity();
  SparseMatrix l = Eigen::kroneckerProduct(id, SparseMatrix(-kI * heff)).eval();
  l += Eigen::kroneckerProduct(SparseMatrix(kI * heff.conjugate()), id).eval();
  for (const auto& c : channels) {
    const SparseMatrix& j = c.op().matrix();
    l += Eigen::kroneckerProduct(SparseMatrix(j.conjugate()), j).eval();
  }
  l.makeCompressed();
  return l;
}

struct SteadyStateOptions {
  double step_fraction = 0.1;   // initial implicit step in units of tau
  double check_from = 10.0;     // steps double from here on, in tau
  double give_up_at = 1e9;      // in tau
  double tolerance = 1e-6;      // trace-norm change per step
  Index max_dim = kMasterEquationMaxDim;
};

struct SteadyStateResult {
  DensityMatrix rho;
  double t_converged = 0.0;
  double last_change = 0.0;     // trace norm of the final step's change
  int steps = 0;
};

/// Relaxes rho0 with implicit Euler steps on the vectorized Liouvillian until
/// the per-step change drops below tolerance. Steps are step_fraction * tau up
/// to check_from * tau and double afterwards, so slow truncation modes settle.
/// As the step grows the map tends to the projector onto the kernel along the
/// decaying modes, so a degenerate kernel keeps the component selected by rho0.
inline SteadyStateResult steady_state(const SparseOperator& h, const std::vector<JumpChannel>& channels,
                                      const DensityMatrix& rho0, double tau, const SteadyStateOptions& opt = {}) {
  require_same_space(h.space(), rho0.space, "steady_state");
  detail::require_dense_dim(rho0.space.total_dim(), opt.max_dim);
  if (!(tau > 0.0)) throw std::invalid_argument("steady_state: relaxation time must be positive");
  const Index n = rho0.space.total_dim();
  const SparseMatrix l = liouvillian(h, channels);
  SparseMatrix identity(n * n, n * n);
  identity.setIdentity();

  // UmfPackLU keeps pointers into the factored matrix, so it lives here.
  SparseMatrix sys;
  Eigen::UmfPackLU<SparseMatrix> lu;
  double factored_dt = 0.0;
  auto factor = [&](double dt) {
    if (dt == factored_dt) return;
    sys = identity - dt * l;
    sys.makeCompressed();
    lu.compute(sys);
    if (lu.info() != Eigen::Success) throw NumericalError("factorization of the implicit Liouvillian step failed");
    factored_dt = dt;
  };

  Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(rho0.matrix.data(), n * n);
  SteadyStateResult res;
  double t = 0.0;
  double dt = opt.step_fraction * tau;
  double change = std::numeric_limits<double>::infinity();
  const double check_time = opt.check_from * tau * (1.0 - 1e-12);
  while (t < opt.give_up_at * tau) {
    const bool checking = t >= check_time;
    if (checking) dt *= 2.0;
    factor(dt);
    Eigen::VectorXcd next = lu.solve(v);
    if (lu.info() != Eigen::Success) throw NumericalError("implicit Liouvillian solve failed");
    t += dt;
    ++res.steps;
    Eigen::Map<Eigen::MatrixXcd> rho(next.data(), n, n);
    rho /= rho.trace();
    if (checking) {
      const Eigen::MatrixXcd diff = rho - Eigen::Map<const Eigen::MatrixXcd>(v.data(), n, n);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (diff + diff.adjoint()), Eigen::EigenvaluesOnly);
      change = es.eigenvalues().cwiseAbs().sum();
    }
    v = std::move(next);
    if (change < opt.tolerance) {
      Eigen::Map<const Eigen::MatrixXcd> rho_ss(v.data(), n, n);
      res.rho = DensityMatrix(rho0.space, 0.5 * (rho_ss + rho_ss.adjoint()));
      res.t_converged = t;
      res.last_change = change;
      return res;
    }
  }
  std::ostringstream os;
  os << "steady state not reached after " << opt.give_up_at << " tau (tau = " << tau
     << "); last trace-norm change per step " << change;
  throw NumericalError(os.str());
}

/// As above with tau = 1 / (Gamma_+ - Gamma_-) of the oscillator parameters.
inline SteadyStateResult steady_state(const SparseOperator& h, const std::vector<JumpChannel>& channels,
                                      const DensityMatrix& rho0, const OscillatorParams& p,
                                      const SteadyStateOptions& opt = {}) {
  return steady_state(h, channels, rho0, stokes_rates(p).tau, opt);
}

}  // namespace ringsim
