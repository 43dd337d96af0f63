#pragma once

// Propagators for d psi / dt = -i H_eff psi with a non-Hermitian H_eff.
//
// Both expose the same step protocol: advance() moves forward by one
// internal step and state_within_last() evaluates the solution anywhere
// inside that step, which is what jump-time location needs.

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ringsim/errors.hpp"
#include "ringsim/hilbert.hpp"
#include "ringsim/ode.hpp"

namespace ringsim {

enum class PropagatorKind { rk45, spectral };

class Propagator {
 public:
  virtual ~Propagator() = default;
  virtual void reset(double t0, const Eigen::VectorXcd& psi) = 0;
  /// One internal step, never beyond t_end; returns the new time.
  virtual double advance(double t_end) = 0;
  virtual double time() const = 0;
  virtual double step_start() const = 0;
  virtual const Eigen::VectorXcd& state() const = 0;
  /// Solution at t in [step_start(), time()].
  virtual Eigen::VectorXcd state_within_last(double t) = 0;
};

/// Adaptive Dormand-Prince on -i (H_eff - E0) psi, with E0 = <psi0|H_eff|psi0>
/// real part fixed at each reset. The shift only changes the global phase.
class RkPropagator final : public Propagator {
 public:
  RkPropagator(std::shared_ptr<const SparseMatrix> heff, OdeOptions opt)
      : heff_(std::move(heff)),
        dp_([this](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
          dy.noalias() = *heff_ * y;
          dy = -kI * (dy - shift_ * y);
        }, opt) {}

  RkPropagator(const RkPropagator&) = delete;
  RkPropagator& operator=(const RkPropagator&) = delete;

  void reset(double t0, const Eigen::VectorXcd& psi) override {
    shift_ = psi.dot(*heff_ * psi).real() / std::max(psi.squaredNorm(), 1e-300);
    dp_.reset(t0, psi);
    t_prev_ = t0;
    y_prev_ = psi;
  }
  double advance(double t_end) override {
    t_prev_ = dp_.time();
    y_prev_ = dp_.state();
    return dp_.step(t_end);
  }
  double time() const override { return dp_.time(); }
  double step_start() const override { return t_prev_; }
  const Eigen::VectorXcd& state() const override { return dp_.state(); }
  Eigen::VectorXcd state_within_last(double t) override {
    if (t <= t_prev_) return y_prev_;
    if (t >= dp_.time()) return dp_.state();
    return dp_.fixed_step(t_prev_, y_prev_, t - t_prev_);
  }

 private:
  std::shared_ptr<const SparseMatrix> heff_;
  double shift_ = 0.0;
  DormandPrince<Eigen::VectorXcd> dp_;
  double t_prev_ = 0.0;
  Eigen::VectorXcd y_prev_;
};

/// Eigendecomposition of H_eff restricted to each connected component of its
/// sparsity graph. Immutable once built; shared across trajectories.
class SpectralDecomposition {
 public:
  struct Block {
    std::vector<Index> indices;
    Eigen::VectorXcd eigenvalues;
    Eigen::MatrixXcd vectors;
    Eigen::MatrixXcd inverse;
  };

  explicit SpectralDecomposition(const SparseMatrix& heff, double tol = 1e-9) : dim_(heff.rows()) {
    if (heff.rows() != heff.cols()) throw std::invalid_argument("spectral decomposition of a non-square matrix");
    for (auto& comp : components(heff)) {
      Block b;
      b.indices = std::move(comp);
      const Index n = Index(b.indices.size());
      Eigen::MatrixXcd h(n, n);
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) h(i, j) = heff.coeff(b.indices[std::size_t(i)], b.indices[std::size_t(j)]);
      Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(h, true);
      if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of H_eff block failed");
      b.eigenvalues = es.eigenvalues();
      b.vectors = es.eigenvectors();
      b.inverse = b.vectors.partialPivLu().inverse();
      const double scale = std::max(1.0, h.norm());
      const double err = (b.vectors * b.eigenvalues.asDiagonal() * b.inverse - h).norm() / scale;
      if (!(err <= tol))
        throw NumericalError("H_eff block of dimension " + std::to_string(n) +
                             " is not reliably diagonalizable (reconstruction error " + std::to_string(err) +
                             "); use the rk45 propagator");
      blocks_.push_back(std::move(b));
    }
  }

  Index dim() const { return dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  static std::vector<std::vector<Index>> components(const SparseMatrix& m) {
    const Index n = m.rows();
    std::vector<Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
      while (parent[std::size_t(x)] != x) x = parent[std::size_t(x)] = parent[std::size_t(parent[std::size_t(x)])];
      return x;
    };
    for (Index c = 0; c < m.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
        if (it.value() == cplx(0.0)) continue;
        const Index a = find(it.row()), b = find(it.col());
        if (a != b) parent[std::size_t(std::max(a, b))] = std::min(a, b);
      }
    std::vector<std::vector<Index>> out;
    std::vector<Index> slot(static_cast<std::size_t>(n), -1);
    for (Index i = 0; i < n; ++i) {
      const Index r = find(i);
      if (slot[std::size_t(r)] < 0) {
        slot[std::size_t(r)] = Index(out.size());
        out.emplace_back();
      }
      out[std::size_t(slot[std::size_t(r)])].push_back(i);
    }
    return out;
  }

  Index dim_ = 0;
  std::vector<Block> blocks_;
};

/// Exact exponential propagation in the eigenbasis. A single advance()
/// reaches t_end, since the squared norm decays monotonically in time.
class SpectralPropagator final : public Propagator {
 public:
  explicit SpectralPropagator(std::shared_ptr<const SpectralDecomposition> dec) : dec_(std::move(dec)) {}

  void reset(double t0, const Eigen::VectorXcd& psi) override {
    if (psi.size() != dec_->dim()) throw std::invalid_argument("spectral propagator: state dimension mismatch");
    anchor_ = t_prev_ = t_ = t0;
    coeffs_.clear();
    for (const auto& b : dec_->blocks()) {
      Eigen::VectorXcd local(Index(b.indices.size()));
      for (std::size_t i = 0; i < b.indices.size(); ++i) local(Index(i)) = psi(b.indices[i]);
      coeffs_.push_back(b.inverse * local);
    }
    state_ = psi;
  }
  double advance(double t_end) override {
    t_prev_ = t_;
    t_ = t_end;
    state_ = evaluate(t_end);
    return t_;
  }
  double time() const override { return t_; }
  double step_start() const override { return t_prev_; }
  const Eigen::VectorXcd& state() const override { return state_; }
  Eigen::VectorXcd state_within_last(double t) override { return evaluate(t); }

 private:
  Eigen::VectorXcd evaluate(double t) const {
    Eigen::VectorXcd out(dec_->dim());
    const double dt = t - anchor_;
    for (std::size_t k = 0; k < dec_->blocks().size(); ++k) {
      const auto& b = dec_->blocks()[k];
      const Eigen::VectorXcd phased = ((-kI * dt) * b.eigenvalues.array()).exp() * coeffs_[k].array();
      const Eigen::VectorXcd local = b.vectors * phased;
      for (std::size_t i = 0; i < b.indices.size(); ++i) out(b.indices[i]) = local(Index(i));
    }
    return out;
  }

  std::shared_ptr<const SpectralDecomposition> dec_;
  std::vector<Eigen::VectorXcd> coeffs_;
  Eigen::VectorXcd state_;
  double anchor_ = 0.0, t_prev_ = 0.0, t_ = 0.0;
};

}  // namespace ringsim
