#pragma once

// Observables on pure and mixed states: momentum correlations, heralded
// (photon-conditioned) states, g2(0), logarithmic negativity, joint momentum
// histograms and the scattering-basis jump map.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ringsim/errors.hpp"
#include "ringsim/hilbert.hpp"
#include "ringsim/models.hpp"

namespace ringsim {

/// Dimensionless oscillator momentum (b - b^dag) / (i sqrt 2).
inline SparseOperator oscillator_momentum(const FockSpace& f) {
  const auto b = annihilation_operator(f);
  return SparseOperator::hermitian(b.space(), ((b - b.adjoint()) * (-kI / std::sqrt(2.0))).matrix());
}

/// Momentum observable of particle factor k: n for a lattice, p~ for an oscillator.
inline SparseOperator particle_momentum(const SpaceDescriptor& space, std::size_t k) {
  const auto& f = space.factor(k);
  if (const auto* lat = std::get_if<MomentumLattice>(&f)) return embed(space, k, momentum_operator(*lat));
  return embed(space, k, oscillator_momentum(std::get<FockSpace>(f)));
}

/// First and second momentum moments of the two particles.
struct MomentMoments {
  double p1 = 0.0, p2 = 0.0, p1p1 = 0.0, p2p2 = 0.0, p1p2 = 0.0;
};

struct CorrelationReport {
  std::optional<double> cp;  // empty when either variance vanishes
  double cov_p = 0.0;
  double var_p1 = 0.0;
  double var_p2 = 0.0;
  double mean_p1 = 0.0;
  double mean_p2 = 0.0;

  bool defined() const { return cp.has_value(); }
  /// cp, or throws RegimeError when undefined.
  double value() const {
    if (!cp) throw RegimeError("momentum correlation undefined: a particle has zero momentum variance");
    return *cp;
  }
};

inline constexpr double kZeroVariance = 1e-14;

inline CorrelationReport correlation_from_moments(const MomentMoments& m) {
  CorrelationReport r;
  r.mean_p1 = m.p1;
  r.mean_p2 = m.p2;
  r.var_p1 = std::max(0.0, m.p1p1 - m.p1 * m.p1);
  r.var_p2 = std::max(0.0, m.p2p2 - m.p2 * m.p2);
  r.cov_p = m.p1p2 - m.p1 * m.p2;
  if (r.var_p1 > kZeroVariance && r.var_p2 > kZeroVariance) r.cp = r.cov_p / std::sqrt(r.var_p1 * r.var_p2);
  return r;
}

namespace detail {

inline void require_particle_pair(const SpaceDescriptor& s) {
  if (s.num_factors() < 2) throw std::invalid_argument("momentum correlation needs two particle factors");
  if (is_momentum(s.factor(0)) != is_momentum(s.factor(1)))
    throw std::invalid_argument("momentum correlation: particle factors must be of the same kind");
  for (std::size_t k = 0; k < 2; ++k)
    if (const auto* f = std::get_if<FockSpace>(&s.factor(k)); f && f->cutoff < 2)
      throw std::invalid_argument("momentum correlation: oscillator factor needs Fock cutoff >= 2");
}

}  // namespace detail

/// Momentum moments of factors 0 and 1 of an (unnormalized) state; moments are
/// divided by the squared norm.
inline MomentMoments momentum_moments(const StateVector& psi) {
  detail::require_particle_pair(psi.space);
  const auto P1 = particle_momentum(psi.space, 0);
  const auto P2 = particle_momentum(psi.space, 1);
  const Eigen::VectorXcd v1 = P1.matrix() * psi.amplitudes;
  const Eigen::VectorXcd v2 = P2.matrix() * psi.amplitudes;
  const double n = psi.norm_squared();
  if (!(n > 0.0)) throw std::invalid_argument("momentum moments of the zero vector");
  MomentMoments m;
  m.p1 = psi.amplitudes.dot(v1).real() / n;
  m.p2 = psi.amplitudes.dot(v2).real() / n;
  m.p1p1 = v1.squaredNorm() / n;
  m.p2p2 = v2.squaredNorm() / n;
  m.p1p2 = v1.dot(v2).real() / n;
  return m;
}

inline MomentMoments momentum_moments(const DensityMatrix& rho) {
  detail::require_particle_pair(rho.space);
  const auto P1 = particle_momentum(rho.space, 0);
  const auto P2 = particle_momentum(rho.space, 1);
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) throw std::invalid_argument("momentum moments of a traceless matrix");
  MomentMoments m;
  m.p1 = expectation(rho, P1).real() / tr;
  m.p2 = expectation(rho, P2).real() / tr;
  m.p1p1 = expectation(rho, P1 * P1).real() / tr;
  m.p2p2 = expectation(rho, P2 * P2).real() / tr;
  m.p1p2 = expectation(rho, P1 * P2).real() / tr;
  return m;
}

inline CorrelationReport momentum_correlation(const StateVector& psi) {
  return correlation_from_moments(momentum_moments(psi));
}

inline CorrelationReport momentum_correlation(const DensityMatrix& rho) {
  return correlation_from_moments(momentum_moments(rho));
}

/// a rho a^dag / Tr(a rho a^dag).
inline DensityMatrix conditional_density_matrix(const DensityMatrix& rho, const SparseOperator& a) {
  require_same_space(rho.space, a.space(), "conditional_density_matrix");
  Eigen::MatrixXcd m = a.matrix() * rho.matrix;
  m = (a.matrix() * m.adjoint()).adjoint().eval();
  const double p = m.trace().real();
  if (!(p > 1e-12)) throw RegimeError("nothing to herald: jump probability Tr(a rho a^dag) vanishes");
  m /= p;
  return {rho.space, 0.5 * (m + m.adjoint())};
}

/// <a^dag a^dag a a> / <a^dag a>^2, cross-checked against the photon-number
/// ratio between the heralded and the unconditioned state.
inline double g2_zero(const DensityMatrix& rho, const SparseOperator& a) {
  require_same_space(rho.space, a.space(), "g2_zero");
  const SparseOperator n_op = a.adjoint() * a;
  const double n = expectation(rho, n_op).real();
  if (!(n > 1e-12)) throw RegimeError("g2 undefined: field is in vacuum");
  const SparseOperator a2 = a * a;
  const double nn = expectation(rho, a2.adjoint() * a2).real();
  const double g2 = nn / (n * n);
  const double ratio = expectation(conditional_density_matrix(rho, a), n_op).real() / n;
  if (std::abs(g2 - ratio) > 1e-10 * std::max(1.0, std::abs(g2)))
    throw NumericalError("g2 identity violated: moment form " + std::to_string(g2) + " vs heralded ratio " +
                         std::to_string(ratio));
  return g2;
}

inline constexpr Index kLogNegativityMaxDim = 2048;

/// rho^{T_A}: transpose on the factors listed in `party_a`.
inline Eigen::MatrixXcd partial_transpose(const DensityMatrix& rho, const std::vector<std::size_t>& party_a) {
  const auto& s = rho.space;
  std::vector<bool> in_a(s.num_factors(), false);
  for (auto k : party_a) {
    if (k >= s.num_factors()) throw std::invalid_argument("partial transpose: factor index out of range");
    in_a[k] = true;
  }
  const Index n = s.total_dim();
  // Swapping the A-digits of (i, j) maps i -> i - dA(i) + dA(j).
  std::vector<Index> a_part(std::size_t(n), 0);
  for (Index i = 0; i < n; ++i)
    for (std::size_t k = 0; k < s.num_factors(); ++k)
      if (in_a[k]) a_part[std::size_t(i)] += s.digit(i, k) * s.stride(k);
  Eigen::MatrixXcd out(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const Index ai = a_part[std::size_t(i)], aj = a_part[std::size_t(j)];
      out(i - ai + aj, j - aj + ai) = rho.matrix(i, j);
    }
  return out;
}

/// log2 || rho^{T_A} ||_1, with A = `party_a` and B every other factor.
inline double log_negativity(const DensityMatrix& rho, const std::vector<std::size_t>& party_a,
                             Index max_dim = kLogNegativityMaxDim) {
  if (rho.space.total_dim() > max_dim)
    throw std::invalid_argument("log_negativity: dimension " + std::to_string(rho.space.total_dim()) +
                                " exceeds the dense guard " + std::to_string(max_dim));
  if (party_a.empty() || party_a.size() >= rho.space.num_factors())
    throw std::invalid_argument("log_negativity: both parties need at least one factor");
  std::vector<std::size_t> sorted = party_a;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("log_negativity: duplicate factor in party A");
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) throw std::invalid_argument("log_negativity: non-positive trace");
  Eigen::MatrixXcd pt = partial_transpose(rho, party_a) / tr;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (pt + pt.adjoint()), Eigen::EigenvaluesOnly);
  const double e = std::log2(es.eigenvalues().cwiseAbs().sum());
  return e < 1e-10 ? 0.0 : e;
}

/// Particle 1 | particle 2 split of a two-factor state.
inline double log_negativity(const DensityMatrix& rho) {
  if (rho.space.num_factors() != 2) throw std::invalid_argument("log_negativity: default split needs two factors");
  return log_negativity(rho, {0});
}

/// Joint probabilities P(n1, n2) over the first two factors (momentum
/// lattices), traced over any remaining factors. Rows index p1, columns p2.
inline Eigen::MatrixXd momentum_distribution(const DensityMatrix& rho) {
  const auto& s = rho.space;
  if (s.num_factors() < 2 || !is_momentum(s.factor(0)) || !is_momentum(s.factor(1)))
    throw std::invalid_argument("momentum_distribution needs two momentum-lattice factors");
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(s.dim(0), s.dim(1));
  for (Index i = 0; i < s.total_dim(); ++i) p(s.digit(i, 0), s.digit(i, 1)) += rho.matrix(i, i).real();
  const double total = p.sum();
  if (!(total > 0.0)) throw std::invalid_argument("momentum_distribution: zero trace");
  return p / total;
}

struct ToyJumpResult {
  StateVector particles;          // normalized, Fock basis |n1, n2>
  Eigen::VectorXcd coefficients;  // normalized, scattering basis
  double photon_factor = 0.0;     // photon number after / before the jump
};

/// Jump map in the scattering basis: c_i -> c_i lambda_i, with the photon
/// number carried by the |lambda_i alpha|^2 populations.
inline ToyJumpResult toy_jump_state(const ScatteringBasis& basis, const Eigen::VectorXcd& coeffs, cplx alpha) {
  if (coeffs.size() != basis.dimension()) throw std::invalid_argument("toy_jump_state: coefficient length mismatch");
  if (std::abs(coeffs.squaredNorm() - 1.0) > 1e-10) throw std::invalid_argument("toy_jump_state: coefficients not normalized");
  const Eigen::ArrayXd lambda = basis.eigenvalues.array();
  const Eigen::ArrayXd lam_sq = lambda.square();
  const double a_sq = std::norm(alpha);
  const Eigen::ArrayXd pop = coeffs.array().abs2();

  Eigen::VectorXcd post = (coeffs.array() * lambda.cast<cplx>()).matrix();
  for (Index i = 0; i < post.size(); ++i)
    if (!basis.radiative(i)) post(i) = 0.0;
  const double post_norm_sq = post.squaredNorm();
  const double before = (pop * lam_sq).sum() * a_sq;
  if (!(post_norm_sq > 1e-24) || !(before > 0.0))
    throw RegimeError("nothing to herald: state has no radiative component");
  const double after = (post.array().abs2() * lam_sq).sum() * a_sq / post_norm_sq;

  ToyJumpResult r;
  r.coefficients = post / std::sqrt(post_norm_sq);
  r.photon_factor = after / before;
  r.particles = StateVector(basis.space(), basis.eigenvectors.cast<cplx>() * r.coefficients);
  return r;
}

}  // namespace ringsim
