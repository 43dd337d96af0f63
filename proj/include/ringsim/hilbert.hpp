#pragma once

// Composite Hilbert spaces built from truncated momentum lattices and Fock
// spaces, sparse operators over them, and pure/mixed state containers.
//
// Units are recoil units throughout: hbar = k = omega_R = 1, so a momentum
// lattice site n carries momentum n*hbar*k and kinetic energy n^2.
// Factor order is fixed as (particle 1, particle 2, field); the first factor
// is the slowest-varying index of the Kronecker layout.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

#include "ringsim/errors.hpp"

namespace ringsim {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

inline constexpr cplx kI{0.0, 1.0};

/// Momentum basis |n hbar k>, n in [-cutoff, cutoff].
struct MomentumLattice {
  int cutoff = 0;
  Index dim() const { return 2 * Index(cutoff) + 1; }
  Index index_of(int n) const { return Index(n) + cutoff; }
  int momentum_of(Index idx) const { return int(idx) - cutoff; }
  bool operator==(const MomentumLattice&) const = default;
};

/// Fock basis |0> .. |cutoff-1>.
struct FockSpace {
  int cutoff = 0;
  Index dim() const { return cutoff; }
  bool operator==(const FockSpace&) const = default;
};

using Factor = std::variant<MomentumLattice, FockSpace>;

inline Index factor_dim(const Factor& f) {
  return std::visit([](const auto& x) { return x.dim(); }, f);
}

inline bool is_momentum(const Factor& f) { return std::holds_alternative<MomentumLattice>(f); }
inline bool is_fock(const Factor& f) { return std::holds_alternative<FockSpace>(f); }

class SpaceDescriptor {
 public:
  SpaceDescriptor() = default;

  explicit SpaceDescriptor(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw std::invalid_argument("space needs at least one factor");
    for (const auto& f : factors_) {
      if (const auto* m = std::get_if<MomentumLattice>(&f); m && m->cutoff < 0)
        throw std::invalid_argument("momentum cutoff must be >= 0");
      if (const auto* n = std::get_if<FockSpace>(&f); n && n->cutoff < 1)
        throw std::invalid_argument("Fock cutoff must be >= 1");
    }
    strides_.assign(factors_.size(), 1);
    total_dim_ = 1;
    for (std::size_t k = factors_.size(); k-- > 0;) {
      strides_[k] = total_dim_;
      total_dim_ *= factor_dim(factors_[k]);
    }
  }

  const std::vector<Factor>& factors() const { return factors_; }
  const Factor& factor(std::size_t k) const { return factors_.at(k); }
  std::size_t num_factors() const { return factors_.size(); }
  Index total_dim() const { return total_dim_; }
  Index dim(std::size_t k) const { return factor_dim(factors_.at(k)); }
  Index stride(std::size_t k) const { return strides_.at(k); }

  /// Index of the basis label along factor k.
  Index digit(Index full, std::size_t k) const { return (full / strides_[k]) % dim(k); }

  SpaceDescriptor subspace(std::span<const std::size_t> keep) const {
    std::vector<Factor> f;
    for (auto k : keep) f.push_back(factors_.at(k));
    return SpaceDescriptor(std::move(f));
  }

  bool operator==(const SpaceDescriptor& o) const { return factors_ == o.factors_; }

  std::string describe() const {
    std::ostringstream os;
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      if (k) os << " x ";
      if (const auto* m = std::get_if<MomentumLattice>(&factors_[k]))
        os << "Momentum(N=" << m->cutoff << ")";
      else
        os << "Fock(" << std::get<FockSpace>(factors_[k]).cutoff << ")";
    }
    return os.str();
  }

 private:
  std::vector<Factor> factors_;
  std::vector<Index> strides_;
  Index total_dim_ = 0;
};

inline SpaceDescriptor single_factor_space(const Factor& f) { return SpaceDescriptor({f}); }

inline void require_same_space(const SpaceDescriptor& a, const SpaceDescriptor& b, const char* what) {
  if (!(a == b))
    throw std::invalid_argument(std::string(what) + ": space mismatch (" + a.describe() + " vs " +
                                b.describe() + ")");
}

/// Largest entrywise |M - M^dagger|.
inline double hermiticity_defect(const SparseMatrix& m) {
  SparseMatrix d = m - SparseMatrix(m.adjoint());
  double worst = 0.0;
  for (Index c = 0; c < d.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(d, c); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst;
}

inline constexpr double kHermitianTolerance = 1e-12;

class SparseOperator {
 public:
  SparseOperator() = default;

  SparseOperator(SpaceDescriptor space, SparseMatrix m, bool hermitian)
      : space_(std::move(space)), m_(std::move(m)), hermitian_(hermitian) {
    if (m_.rows() != space_.total_dim() || m_.cols() != space_.total_dim())
      throw std::invalid_argument("operator shape does not match space " + space_.describe());
    m_.makeCompressed();
    if (hermitian_) {
      const double defect = hermiticity_defect(m_);
      if (defect > kHermitianTolerance)
        throw std::invalid_argument("operator flagged Hermitian has |M - M^dagger| = " +
                                    std::to_string(defect));
    }
  }

  /// Verifies Hermiticity within tolerance, then stores the exactly Hermitian part.
  static SparseOperator hermitian(SpaceDescriptor space, const SparseMatrix& m) {
    SparseMatrix sym = 0.5 * (m + SparseMatrix(m.adjoint()));
    if (hermiticity_defect(m) > kHermitianTolerance)
      throw std::invalid_argument("matrix is not Hermitian within tolerance");
    return SparseOperator(std::move(space), std::move(sym), true);
  }

  const SpaceDescriptor& space() const { return space_; }
  const SparseMatrix& matrix() const { return m_; }
  bool is_hermitian() const { return hermitian_; }
  Index dim() const { return space_.total_dim(); }

  SparseOperator adjoint() const { return {space_, SparseMatrix(m_.adjoint()), hermitian_}; }

  Eigen::MatrixXcd dense() const { return Eigen::MatrixXcd(m_); }

  SparseOperator operator+(const SparseOperator& o) const {
    require_same_space(space_, o.space_, "operator sum");
    return {space_, m_ + o.m_, hermitian_ && o.hermitian_};
  }
  SparseOperator operator-(const SparseOperator& o) const {
    require_same_space(space_, o.space_, "operator difference");
    return {space_, m_ - o.m_, hermitian_ && o.hermitian_};
  }
  SparseOperator operator*(const SparseOperator& o) const {
    require_same_space(space_, o.space_, "operator product");
    return {space_, SparseMatrix(m_ * o.m_), false};
  }
  SparseOperator operator*(double s) const { return {space_, m_ * s, hermitian_}; }
  SparseOperator operator*(cplx s) const {
    return {space_, m_ * s, hermitian_ && s.imag() == 0.0};
  }
  friend SparseOperator operator*(double s, const SparseOperator& op) { return op * s; }
  friend SparseOperator operator*(cplx s, const SparseOperator& op) { return op * s; }

 private:
  SpaceDescriptor space_;
  SparseMatrix m_;
  bool hermitian_ = false;
};

struct StateVector {
  SpaceDescriptor space;
  Eigen::VectorXcd amplitudes;

  StateVector() = default;
  StateVector(SpaceDescriptor s, Eigen::VectorXcd a) : space(std::move(s)), amplitudes(std::move(a)) {
    if (amplitudes.size() != space.total_dim())
      throw std::invalid_argument("state length does not match space " + space.describe());
  }

  double norm_squared() const { return amplitudes.squaredNorm(); }
  bool is_normalized(double tol = 1e-10) const { return std::abs(norm_squared() - 1.0) <= tol; }
  StateVector& normalize() {
    const double n = amplitudes.norm();
    if (n == 0.0) throw std::invalid_argument("cannot normalize the zero vector");
    amplitudes /= n;
    return *this;
  }
};

struct DensityMatrix {
  SpaceDescriptor space;
  Eigen::MatrixXcd matrix;

  DensityMatrix() = default;
  DensityMatrix(SpaceDescriptor s, Eigen::MatrixXcd m) : space(std::move(s)), matrix(std::move(m)) {
    const Index n = space.total_dim();
    if (matrix.rows() != n || matrix.cols() != n)
      throw std::invalid_argument("density matrix shape does not match space " + space.describe());
  }

  static DensityMatrix pure(const StateVector& psi) {
    return {psi.space, psi.amplitudes * psi.amplitudes.adjoint()};
  }

  cplx trace() const { return matrix.trace(); }

  double hermiticity_defect() const { return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff(); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (matrix + matrix.adjoint()),
                                                        Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate(bool check_positivity = true) const {
    if (hermiticity_defect() > 1e-10) throw std::invalid_argument("density matrix not Hermitian");
    if (std::abs(trace() - 1.0) > 1e-8) throw std::invalid_argument("density matrix trace != 1");
    if (check_positivity && min_eigenvalue() < -1e-8)
      throw std::invalid_argument("density matrix has a negative eigenvalue");
  }
};

// ---------------------------------------------------------------------------
// Single-factor operators

inline SparseOperator annihilation_operator(const FockSpace& f) {
  if (f.cutoff < 2) throw std::invalid_argument("annihilation operator needs Fock cutoff >= 2");
  SparseMatrix a(f.dim(), f.dim());
  std::vector<Triplet> t;
  for (int n = 1; n < f.cutoff; ++n) t.emplace_back(n - 1, n, std::sqrt(double(n)));
  a.setFromTriplets(t.begin(), t.end());
  return {single_factor_space(f), std::move(a), false};
}

inline SparseOperator number_operator(const FockSpace& f) {
  SparseMatrix m(f.dim(), f.dim());
  std::vector<Triplet> t;
  for (int n = 1; n < f.cutoff; ++n) t.emplace_back(n, n, double(n));
  m.setFromTriplets(t.begin(), t.end());
  return {single_factor_space(f), std::move(m), true};
}

inline SparseOperator identity_operator(const SpaceDescriptor& space) {
  SparseMatrix m(space.total_dim(), space.total_dim());
  m.setIdentity();
  return {space, std::move(m), true};
}

enum class TrigKind { cos2k, sin2k, cos_sq, sin_sq };

/// cos(2kx), sin(2kx), cos^2(kx), sin^2(kx) as momentum-shift operators.
/// Components shifted past the lattice edge are dropped.
inline SparseOperator trig_operator(const MomentumLattice& lat, TrigKind kind) {
  if (lat.cutoff < 1) throw std::invalid_argument("trig operator needs momentum cutoff >= 1");
  const Index d = lat.dim();
  // e^{+2ikx}|n> = |n+2>: coefficient on the up-shift and down-shift.
  cplx up, down, diag = 0.0;
  switch (kind) {
    case TrigKind::cos2k: up = 0.5; down = 0.5; break;
    case TrigKind::sin2k: up = 1.0 / (2.0 * kI); down = -1.0 / (2.0 * kI); break;
    case TrigKind::cos_sq: up = 0.25; down = 0.25; diag = 0.5; break;
    case TrigKind::sin_sq: up = -0.25; down = -0.25; diag = 0.5; break;
  }
  std::vector<Triplet> t;
  for (Index i = 0; i < d; ++i) {
    if (diag != 0.0) t.emplace_back(i, i, diag);
    if (i + 2 < d) t.emplace_back(i + 2, i, up);
    if (i - 2 >= 0) t.emplace_back(i - 2, i, down);
  }
  SparseMatrix m(d, d);
  m.setFromTriplets(t.begin(), t.end());
  return {single_factor_space(lat), std::move(m), true};
}

/// p^2/2m = n^2 omega_R on |n hbar k>.
inline SparseOperator kinetic_operator(const MomentumLattice& lat) {
  SparseMatrix m(lat.dim(), lat.dim());
  std::vector<Triplet> t;
  for (Index i = 0; i < lat.dim(); ++i) {
    const double n = lat.momentum_of(i);
    if (n != 0) t.emplace_back(i, i, n * n);
  }
  m.setFromTriplets(t.begin(), t.end());
  return {single_factor_space(lat), std::move(m), true};
}

/// p / (hbar k), diagonal.
inline SparseOperator momentum_operator(const MomentumLattice& lat) {
  SparseMatrix m(lat.dim(), lat.dim());
  std::vector<Triplet> t;
  for (Index i = 0; i < lat.dim(); ++i)
    if (lat.momentum_of(i) != 0) t.emplace_back(i, i, double(lat.momentum_of(i)));
  m.setFromTriplets(t.begin(), t.end());
  return {single_factor_space(lat), std::move(m), true};
}

// ---------------------------------------------------------------------------
// Tensor products

/// Kronecker product in the given order; the result lives on the
/// concatenation of the operands' spaces.
inline SparseOperator tensor(std::span<const SparseOperator> ops) {
  if (ops.empty()) throw std::invalid_argument("tensor of an empty operator list");
  std::vector<Factor> factors;
  SparseMatrix acc = ops[0].matrix();
  bool herm = ops[0].is_hermitian();
  factors.insert(factors.end(), ops[0].space().factors().begin(), ops[0].space().factors().end());
  for (std::size_t k = 1; k < ops.size(); ++k) {
    acc = Eigen::kroneckerProduct(acc, ops[k].matrix()).eval();
    herm = herm && ops[k].is_hermitian();
    factors.insert(factors.end(), ops[k].space().factors().begin(), ops[k].space().factors().end());
  }
  return {SpaceDescriptor(std::move(factors)), std::move(acc), herm};
}

inline SparseOperator tensor(const SparseOperator& a, const SparseOperator& b) {
  const SparseOperator ops[] = {a, b};
  return tensor(std::span<const SparseOperator>(ops));
}

/// One entry per factor of `space`; std::nullopt stands for the identity.
inline SparseOperator tensor(const SpaceDescriptor& space,
                             std::span<const std::optional<SparseOperator>> ops) {
  if (ops.size() != space.num_factors())
    throw std::invalid_argument("tensor: operator list has " + std::to_string(ops.size()) +
                                " entries for a space with " + std::to_string(space.num_factors()) +
                                " factors");
  std::vector<SparseOperator> full;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const auto fs = single_factor_space(space.factor(k));
    if (ops[k]) {
      require_same_space(ops[k]->space(), fs, "tensor factor");
      full.push_back(*ops[k]);
    } else {
      full.push_back(identity_operator(fs));
    }
  }
  return tensor(std::span<const SparseOperator>(full));
}

/// `op` acting on factor k of `space`, identity elsewhere.
inline SparseOperator embed(const SpaceDescriptor& space, std::size_t k, const SparseOperator& op) {
  std::vector<std::optional<SparseOperator>> ops(space.num_factors());
  ops.at(k) = op;
  return tensor(space, ops);
}

// ---------------------------------------------------------------------------
// Expectation values and reductions

inline cplx expectation(const StateVector& psi, const SparseOperator& op) {
  require_same_space(psi.space, op.space(), "expectation");
  return psi.amplitudes.dot(op.matrix() * psi.amplitudes);
}

inline cplx expectation(const DensityMatrix& rho, const SparseOperator& op) {
  require_same_space(rho.space, op.space(), "expectation");
  // Tr(rho M) = sum_ij M_ij rho_ji
  const SparseMatrix& m = op.matrix();
  cplx acc = 0.0;
  for (Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) acc += it.value() * rho.matrix(it.col(), it.row());
  return acc;
}

namespace detail {

/// Index table full[k * dim_traced + t] for kept multi-index k and traced multi-index t.
struct SplitIndex {
  SpaceDescriptor kept_space;
  Index kept_dim = 1;
  Index traced_dim = 1;
  std::vector<Index> full;
};

inline SplitIndex split_index(const SpaceDescriptor& space, std::vector<std::size_t> keep) {
  if (keep.empty()) throw std::invalid_argument("partial trace: keep set is empty");
  std::sort(keep.begin(), keep.end());
  if (std::adjacent_find(keep.begin(), keep.end()) != keep.end())
    throw std::invalid_argument("partial trace: duplicate factor in keep set");
  if (keep.back() >= space.num_factors())
    throw std::invalid_argument("partial trace: factor index out of range");
  std::vector<std::size_t> traced;
  for (std::size_t k = 0; k < space.num_factors(); ++k)
    if (!std::binary_search(keep.begin(), keep.end(), k)) traced.push_back(k);

  SplitIndex s;
  s.kept_space = space.subspace(keep);
  for (auto k : keep) s.kept_dim *= space.dim(k);
  for (auto k : traced) s.traced_dim *= space.dim(k);
  s.full.resize(std::size_t(s.kept_dim * s.traced_dim));
  for (Index i = 0; i < space.total_dim(); ++i) {
    Index ki = 0, ti = 0;
    for (auto k : keep) ki = ki * space.dim(k) + space.digit(i, k);
    for (auto k : traced) ti = ti * space.dim(k) + space.digit(i, k);
    s.full[std::size_t(ki * s.traced_dim + ti)] = i;
  }
  return s;
}

}  // namespace detail

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::vector<std::size_t> keep) {
  const auto s = detail::split_index(rho.space, std::move(keep));
  Eigen::MatrixXcd red = Eigen::MatrixXcd::Zero(s.kept_dim, s.kept_dim);
  for (Index a = 0; a < s.kept_dim; ++a)
    for (Index b = 0; b < s.kept_dim; ++b) {
      cplx acc = 0.0;
      for (Index t = 0; t < s.traced_dim; ++t)
        acc += rho.matrix(s.full[std::size_t(a * s.traced_dim + t)], s.full[std::size_t(b * s.traced_dim + t)]);
      red(a, b) = acc;
    }
  return {s.kept_space, std::move(red)};
}

/// Tr_rest |psi><psi| without forming the full density matrix. The input need
/// not be normalized; the result carries its squared norm as trace.
inline DensityMatrix reduced_density_matrix(const StateVector& psi, std::vector<std::size_t> keep) {
  const auto s = detail::split_index(psi.space, std::move(keep));
  Eigen::MatrixXcd m(s.kept_dim, s.traced_dim);
  for (Index a = 0; a < s.kept_dim; ++a)
    for (Index t = 0; t < s.traced_dim; ++t) m(a, t) = psi.amplitudes(s.full[std::size_t(a * s.traced_dim + t)]);
  Eigen::MatrixXcd red = m * m.adjoint();
  return {s.kept_space, std::move(red)};
}

// ---------------------------------------------------------------------------
// State construction

/// Basis state from per-factor labels: momentum n for lattices, Fock level for Fock spaces.
inline StateVector basis_state(const SpaceDescriptor& space, std::span<const int> labels) {
  if (labels.size() != space.num_factors()) throw std::invalid_argument("basis_state: label count mismatch");
  Index idx = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    Index d;
    if (const auto* m = std::get_if<MomentumLattice>(&space.factor(k))) {
      if (std::abs(labels[k]) > m->cutoff) throw std::invalid_argument("basis_state: momentum outside lattice");
      d = m->index_of(labels[k]);
    } else {
      if (labels[k] < 0 || labels[k] >= std::get<FockSpace>(space.factor(k)).cutoff)
        throw std::invalid_argument("basis_state: Fock level outside cutoff");
      d = labels[k];
    }
    idx += d * space.stride(k);
  }
  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(space.total_dim());
  a(idx) = 1.0;
  return {space, std::move(a)};
}

inline StateVector basis_state(const SpaceDescriptor& space, std::initializer_list<int> labels) {
  return basis_state(space, std::span<const int>(labels.begin(), labels.size()));
}

inline StateVector product_state(std::span<const StateVector> parts) {
  if (parts.empty()) throw std::invalid_argument("product_state of nothing");
  std::vector<Factor> factors;
  Eigen::VectorXcd acc = Eigen::VectorXcd::Ones(1);
  for (const auto& p : parts) {
    factors.insert(factors.end(), p.space.factors().begin(), p.space.factors().end());
    Eigen::VectorXcd next(acc.size() * p.amplitudes.size());
    for (Index i = 0; i < acc.size(); ++i)
      next.segment(i * p.amplitudes.size(), p.amplitudes.size()) = acc(i) * p.amplitudes;
    acc = std::move(next);
  }
  return {SpaceDescriptor(std::move(factors)), std::move(acc)};
}

// ---------------------------------------------------------------------------
// Boundary-leakage monitor

/// Probability on the two outermost momentum sites (|n| >= N-1) of lattice factor k.
inline double boundary_leakage(const StateVector& psi, std::size_t k) {
  const auto* lat = std::get_if<MomentumLattice>(&psi.space.factor(k));
  if (!lat) throw std::invalid_argument("boundary_leakage: factor is not a momentum lattice");
  double p = 0.0;
  for (Index i = 0; i < psi.space.total_dim(); ++i)
    if (std::abs(lat->momentum_of(psi.space.digit(i, k))) >= lat->cutoff - 1) p += std::norm(psi.amplitudes(i));
  return p / psi.norm_squared();
}

inline double boundary_leakage(const DensityMatrix& rho, std::size_t k) {
  const auto* lat = std::get_if<MomentumLattice>(&rho.space.factor(k));
  if (!lat) throw std::invalid_argument("boundary_leakage: factor is not a momentum lattice");
  double p = 0.0;
  for (Index i = 0; i < rho.space.total_dim(); ++i)
    if (std::abs(lat->momentum_of(rho.space.digit(i, k))) >= lat->cutoff - 1) p += rho.matrix(i, i).real();
  return p / rho.trace().real();
}

/// Worst leakage over all momentum-lattice factors of the state.
template <class State>
double max_boundary_leakage(const State& s) {
  double worst = 0.0;
  for (std::size_t k = 0; k < s.space.num_factors(); ++k)
    if (is_momentum(s.space.factor(k))) worst = std::max(worst, boundary_leakage(s, k));
  return worst;
}

inline constexpr double kDefaultLeakageThreshold = 1e-3;

}  // namespace ringsim
