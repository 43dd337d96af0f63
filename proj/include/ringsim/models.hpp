#pragma once

// Hamiltonian-level models: the ring cavity with two trapped particles, its
// linearized optomechanical limit, and the adiabatic scattering-basis toy
// model. All quantities in recoil units (hbar = k = omega_R = 1, m = 1/2).

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ringsim/errors.hpp"
#include "ringsim/hilbert.hpp"

namespace ringsim {

struct RingParams {
  double alpha_c = 150.0;        // pump amplitude of the cosine mode (real, > 0)
  double U0 = -1.0 / 150.0;      // light shift per photon (< 0)
  double delta_c = -10.0;        // pump-cavity detuning
  double kappa = 10.0;           // cavity field decay rate
  bool allow_unstable = false;   // permits delta_c >= 0

  void validate() const {
    if (!(alpha_c >= 0.0) || !std::isfinite(alpha_c)) throw RegimeError("alpha_c must be finite and non-negative");
    if (!(U0 < 0.0)) throw RegimeError("U0 must be negative (red-detuned atoms)");
    if (!(kappa > 0.0)) throw RegimeError("kappa must be positive");
    if (!allow_unstable && !(delta_c < 0.0))
      throw RegimeError("delta_c must be negative (cooling regime); set allow_unstable to override");
  }

  /// Non-fatal warnings about the approximation regime.
  std::vector<std::string> advisories() const {
    std::vector<std::string> out;
    if (alpha_c < 10.0) out.push_back("alpha_c < 10: the classical pump approximation needs alpha_c >> 1");
    return out;
  }
};

struct OscillatorParams {
  double omega = 200.0;   // trap frequency
  double g = 5.0;         // optomechanical coupling
  double delta_c = -20.0;
  double kappa = 100.0;
  double k_xi0 = 0.1;     // Lamb-Dicke parameter

  void validate() const {
    if (!(omega > 0.0)) throw RegimeError("omega must be positive");
    if (!(kappa > 0.0)) throw RegimeError("kappa must be positive");
  }
};

/// omega = sqrt(4|U0| alpha_c^2), k xi0 = sqrt(2/omega), g = U0 alpha_c k xi0 / sqrt(2).
inline OscillatorParams derive_effective_params(const RingParams& p) {
  p.validate();
  OscillatorParams o;
  o.omega = std::sqrt(4.0 * std::abs(p.U0) * p.alpha_c * p.alpha_c);
  o.k_xi0 = std::sqrt(2.0 / o.omega);
  o.g = p.U0 * p.alpha_c * o.k_xi0 / std::sqrt(2.0);
  o.delta_c = p.delta_c;
  o.kappa = p.kappa;
  return o;
}

namespace detail {

inline const MomentumLattice& lattice_at(const SpaceDescriptor& s, std::size_t k, const char* who) {
  const auto* m = std::get_if<MomentumLattice>(&s.factor(k));
  if (!m) throw std::invalid_argument(std::string(who) + ": factor " + std::to_string(k) + " must be a momentum lattice");
  return *m;
}

inline const FockSpace& fock_at(const SpaceDescriptor& s, std::size_t k, const char* who) {
  const auto* f = std::get_if<FockSpace>(&s.factor(k));
  if (!f) throw std::invalid_argument(std::string(who) + ": factor " + std::to_string(k) + " must be a Fock space");
  return *f;
}

}  // namespace detail

/// Space (particle 1 lattice, particle 2 lattice, sine-mode Fock space).
inline SpaceDescriptor ring_space(int momentum_cutoff, int fock_cutoff) {
  return SpaceDescriptor({MomentumLattice{momentum_cutoff}, MomentumLattice{momentum_cutoff}, FockSpace{fock_cutoff}});
}

/// Space (oscillator 1, oscillator 2, field).
inline SpaceDescriptor oscillator_space(int oscillator_cutoff, int field_cutoff) {
  return SpaceDescriptor({FockSpace{oscillator_cutoff}, FockSpace{oscillator_cutoff}, FockSpace{field_cutoff}});
}

/// Field annihilation operator on the last factor of a (., ., Fock) space.
inline SparseOperator field_annihilation(const SpaceDescriptor& space) {
  const auto& f = detail::fock_at(space, space.num_factors() - 1, "field_annihilation");
  return embed(space, space.num_factors() - 1, annihilation_operator(f));
}

/// Two particles in the ring cavity:
///   sum_i [p_i^2/2m + U0 alpha_c^2 cos^2(x_i) + U0 a^dag a sin^2(x_i)]
///   + (U0 alpha_c / 2)(a + a^dag) sum_i sin(2 x_i) - delta_c a^dag a
inline SparseOperator build_ring_hamiltonian(const RingParams& p, const SpaceDescriptor& space) {
  p.validate();
  if (space.num_factors() != 3) throw std::invalid_argument("ring Hamiltonian needs (lattice, lattice, Fock)");
  const auto& l1 = detail::lattice_at(space, 0, "build_ring_hamiltonian");
  const auto& l2 = detail::lattice_at(space, 1, "build_ring_hamiltonian");
  const auto& f = detail::fock_at(space, 2, "build_ring_hamiltonian");

  const SparseOperator a = annihilation_operator(f);
  const SparseOperator n_ph = number_operator(f);
  const SparseOperator quad = SparseOperator::hermitian(a.space(), (a + a.adjoint()).matrix());

  SparseMatrix h(space.total_dim(), space.total_dim());
  const MomentumLattice lats[2] = {l1, l2};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& lat = lats[i];
    std::vector<std::optional<SparseOperator>> kin(3), trap(3), back(3), scat(3);
    kin[i] = kinetic_operator(lat);
    trap[i] = trig_operator(lat, TrigKind::cos_sq);
    back[i] = trig_operator(lat, TrigKind::sin_sq);
    back[2] = n_ph;
    scat[i] = trig_operator(lat, TrigKind::sin2k);
    scat[2] = quad;
    h += tensor(space, kin).matrix();
    h += (p.U0 * p.alpha_c * p.alpha_c) * tensor(space, trap).matrix();
    h += p.U0 * tensor(space, back).matrix();
    h += (0.5 * p.U0 * p.alpha_c) * tensor(space, scat).matrix();
  }
  h += (-p.delta_c) * embed(space, 2, n_ph).matrix();
  h.prune(cplx(0.0));
  return SparseOperator::hermitian(space, h);
}

/// sum_i omega b_i^dag b_i - delta_c a^dag a + g sum_i (b_i + b_i^dag)(a + a^dag)
inline SparseOperator build_linearized_hamiltonian(const OscillatorParams& p, const SpaceDescriptor& space) {
  p.validate();
  if (space.num_factors() != 3) throw std::invalid_argument("linearized Hamiltonian needs (Fock, Fock, Fock)");
  const auto& f1 = detail::fock_at(space, 0, "build_linearized_hamiltonian");
  const auto& f2 = detail::fock_at(space, 1, "build_linearized_hamiltonian");
  const auto& ff = detail::fock_at(space, 2, "build_linearized_hamiltonian");

  auto quadrature = [](const FockSpace& f) {
    const auto a = annihilation_operator(f);
    return SparseOperator::hermitian(a.space(), (a + a.adjoint()).matrix());
  };
  SparseMatrix h = p.omega * (embed(space, 0, number_operator(f1)).matrix() + embed(space, 1, number_operator(f2)).matrix());
  h += (-p.delta_c) * embed(space, 2, number_operator(ff)).matrix();
  const FockSpace osc[2] = {f1, f2};
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<std::optional<SparseOperator>> ops(3);
    ops[i] = quadrature(osc[i]);
    ops[2] = quadrature(ff);
    h += p.g * tensor(space, ops).matrix();
  }
  h.prune(cplx(0.0));
  return SparseOperator::hermitian(space, h);
}

/// Harmonic ground states of two wells, particle 1 at x = 0 and particle 2 at
/// x = well_offset * pi; field in vacuum. In momentum space each particle is a
/// Gaussian with variance omega/4 (in (hbar k)^2).
inline StateVector initial_state_two_wells(const RingParams& p, const SpaceDescriptor& space, int well_offset = 1) {
  const auto& l1 = detail::lattice_at(space, 0, "initial_state_two_wells");
  const auto& l2 = detail::lattice_at(space, 1, "initial_state_two_wells");
  const auto& f = detail::fock_at(space, 2, "initial_state_two_wells");
  const double omega = derive_effective_params(p).omega;
  if (!(omega > 0.0)) throw std::invalid_argument("initial_state_two_wells: no trap without pump (alpha_c = 0)");
  const double sigma = std::sqrt(omega / 4.0);
  if (4.0 * sigma > std::min(l1.cutoff, l2.cutoff))
    throw std::invalid_argument("lattice too small: need momentum cutoff >= 4 sigma = " + std::to_string(4.0 * sigma));

  auto gaussian = [&](const MomentumLattice& lat, int offset) {
    Eigen::VectorXcd a(lat.dim());
    for (Index i = 0; i < lat.dim(); ++i) {
      const int n = lat.momentum_of(i);
      // |psi(n)|^2 ~ exp(-n^2 / (2 sigma^2)); position shift x0 = offset*pi gives e^{-i n x0}.
      const double sign = ((n * offset) % 2 == 0) ? 1.0 : -1.0;
      a(i) = sign * std::exp(-double(n) * n / (4.0 * sigma * sigma));
    }
    a.normalize();
    return StateVector(single_factor_space(lat), std::move(a));
  };
  Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(f.dim());
  vac(0) = 1.0;
  const StateVector parts[] = {gaussian(l1, 0), gaussian(l2, well_offset), StateVector(single_factor_space(f), vac)};
  auto psi = product_state(parts);
  return {space, std::move(psi.amplitudes)};
}

/// Eigenbasis of sum_i (b_i + b_i^dag) on two truncated oscillators.
struct ScatteringBasis {
  int fock_cutoff = 0;
  Eigen::VectorXd eigenvalues;    // ascending
  Eigen::MatrixXd eigenvectors;   // columns |e_i> in the Fock basis |n1, n2>

  static constexpr double kZeroThreshold = 1e-8;

  Index dimension() const { return eigenvalues.size(); }
  bool radiative(Index i) const { return std::abs(eigenvalues(i)) > kZeroThreshold; }
  SpaceDescriptor space() const { return SpaceDescriptor({FockSpace{fock_cutoff}, FockSpace{fock_cutoff}}); }
};

/// Scattering operator sum_i (b_i + b_i^dag) on (Fock(c), Fock(c)).
inline SparseOperator scattering_operator(int fock_cutoff) {
  const FockSpace f{fock_cutoff};
  const SpaceDescriptor s({f, f});
  const auto a = annihilation_operator(f);
  const auto x = SparseOperator::hermitian(a.space(), (a + a.adjoint()).matrix());
  return embed(s, 0, x) + embed(s, 1, x);
}

inline ScatteringBasis scattering_basis(int fock_cutoff) {
  if (fock_cutoff < 2) throw std::invalid_argument("scattering basis needs Fock cutoff >= 2");
  const Eigen::MatrixXd s = scattering_operator(fock_cutoff).dense().real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) throw NumericalError("scattering operator diagonalization failed");
  ScatteringBasis b{fock_cutoff, es.eigenvalues(), es.eigenvectors()};
  const Index n = b.dimension();
  for (Index i = 0; i < n; ++i)
    if (std::abs(b.eigenvalues(i) + b.eigenvalues(n - 1 - i)) > 1e-8)
      throw NumericalError("scattering eigenvalues are not paired as +/- lambda");
  return b;
}

/// Radiated field amplitude per unit scattering eigenvalue: -i g / (kappa - i delta_c).
inline cplx toy_field_amplitude(const OscillatorParams& p) { return -kI * p.g / (p.kappa - kI * p.delta_c); }

/// Non-Hermitian generator in scattering-basis coordinates:
///   omega <i| sum_k b_k^dag b_k |j> |i><j|  -  i kappa sum_i |lambda_i alpha|^2 |i><i|
inline SparseOperator build_toy_generator(const OscillatorParams& p, const ScatteringBasis& basis) {
  p.validate();
  const FockSpace f{basis.fock_cutoff};
  const SpaceDescriptor s({f, f});
  const Eigen::MatrixXd n_tot = (embed(s, 0, number_operator(f)) + embed(s, 1, number_operator(f))).dense().real();
  const Eigen::MatrixXd& e = basis.eigenvectors;
  Eigen::MatrixXcd h = (p.omega * (e.transpose() * n_tot * e)).cast<cplx>();
  const double alpha_sq = std::norm(toy_field_amplitude(p));
  for (Index i = 0; i < basis.dimension(); ++i)
    h(i, i) += -kI * p.kappa * alpha_sq * basis.eigenvalues(i) * basis.eigenvalues(i);
  SparseMatrix m = h.sparseView(1.0, 1e-14);
  return {s, std::move(m), false};
}

}  // namespace ringsim
