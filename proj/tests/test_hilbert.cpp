#include <random>

#include <gtest/gtest.h>

#include "ringsim/hilbert.hpp"

using namespace ringsim;

namespace {

Eigen::VectorXcd unit(Index dim, Index i) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim);
  v(i) = 1.0;
  return v;
}

DensityMatrix random_density(const SpaceDescriptor& s, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const Index n = s.total_dim();
  Eigen::MatrixXcd m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
  Eigen::MatrixXcd rho = m * m.adjoint();
  rho /= rho.trace();
  return {s, rho};
}

}  // namespace

TEST(SpaceDescriptor, DimensionsAndStrides) {
  const SpaceDescriptor s({MomentumLattice{3}, MomentumLattice{2}, FockSpace{4}});
  EXPECT_EQ(s.dim(0), 7);
  EXPECT_EQ(s.dim(1), 5);
  EXPECT_EQ(s.dim(2), 4);
  EXPECT_EQ(s.total_dim(), 7 * 5 * 4);
  EXPECT_EQ(s.stride(0), 20);
  EXPECT_EQ(s.stride(2), 1);
  const auto psi = basis_state(s, {-1, 2, 3});
  Index idx = 0;
  psi.amplitudes.cwiseAbs().maxCoeff(&idx);
  EXPECT_EQ(s.digit(idx, 0), 2);
  EXPECT_EQ(s.digit(idx, 1), 4);
  EXPECT_EQ(s.digit(idx, 2), 3);
}

TEST(SpaceDescriptor, RejectsBadFactors) {
  EXPECT_THROW(SpaceDescriptor(std::vector<Factor>{}), std::invalid_argument);
  EXPECT_THROW(SpaceDescriptor({FockSpace{0}}), std::invalid_argument);
  EXPECT_THROW(SpaceDescriptor({MomentumLattice{-1}}), std::invalid_argument);
}

TEST(StateVector, LengthChecked) {
  EXPECT_THROW(StateVector(single_factor_space(FockSpace{3}), Eigen::VectorXcd::Zero(4)), std::invalid_argument);
}

TEST(Annihilation, LadderAction) {
  const FockSpace f{5};
  const auto a = annihilation_operator(f);
  const Eigen::VectorXcd out = a.matrix() * unit(5, 3);
  EXPECT_NEAR(std::abs(out(2) - std::sqrt(3.0)), 0.0, 1e-15);
  EXPECT_NEAR(out.norm(), std::sqrt(3.0), 1e-15);
  EXPECT_EQ((a.matrix() * unit(5, 0)).norm(), 0.0);
  const auto n = a.adjoint() * a;
  for (int k = 0; k < 5; ++k) EXPECT_NEAR((n.matrix() * unit(5, k) - double(k) * unit(5, k)).norm(), 0.0, 1e-14);
  EXPECT_THROW(annihilation_operator(FockSpace{1}), std::invalid_argument);
}

TEST(Annihilation, CommutatorBelowTruncation) {
  const auto a = annihilation_operator(FockSpace{6});
  const Eigen::MatrixXcd c = a.dense() * a.adjoint().dense() - a.adjoint().dense() * a.dense();
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(std::abs(c(k, k) - 1.0), 0.0, 1e-14);
}

TEST(TrigOperator, ActionsOnZeroMomentum) {
  const MomentumLattice lat{4};
  const auto zero = unit(lat.dim(), lat.index_of(0));
  const Eigen::VectorXcd c = trig_operator(lat, TrigKind::cos2k).matrix() * zero;
  EXPECT_NEAR(std::abs(c(lat.index_of(2)) - 0.5), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(c(lat.index_of(-2)) - 0.5), 0.0, 1e-15);
  EXPECT_NEAR(c.norm(), std::sqrt(0.5), 1e-15);
  const Eigen::VectorXcd s = trig_operator(lat, TrigKind::sin_sq).matrix() * zero;
  EXPECT_NEAR(std::abs(s(lat.index_of(0)) - 0.5), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s(lat.index_of(2)) + 0.25), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s(lat.index_of(-2)) + 0.25), 0.0, 1e-15);
}

TEST(TrigOperator, HermitianAndInteriorCommutation) {
  const MomentumLattice lat{6};
  for (auto kind : {TrigKind::cos2k, TrigKind::sin2k, TrigKind::cos_sq, TrigKind::sin_sq}) {
    const auto op = trig_operator(lat, kind);
    EXPECT_TRUE(op.is_hermitian());
    EXPECT_LE(hermiticity_defect(op.matrix()), 1e-12);
  }
  const Eigen::MatrixXcd c = trig_operator(lat, TrigKind::cos2k).dense();
  const Eigen::MatrixXcd s = trig_operator(lat, TrigKind::sin2k).dense();
  const Eigen::MatrixXcd comm = c * s - s * c;
  for (int n = -(lat.cutoff - 2); n <= lat.cutoff - 2; ++n)
    for (int m = -(lat.cutoff - 2); m <= lat.cutoff - 2; ++m)
      EXPECT_EQ(comm(lat.index_of(n), lat.index_of(m)), cplx(0.0));
  const Eigen::MatrixXcd sum =
      trig_operator(lat, TrigKind::cos_sq).dense() + trig_operator(lat, TrigKind::sin_sq).dense();
  EXPECT_NEAR((sum - Eigen::MatrixXcd::Identity(lat.dim(), lat.dim())).norm(), 0.0, 1e-15);
}

TEST(KineticOperator, Diagonal) {
  const MomentumLattice lat{3};
  const auto k = kinetic_operator(lat).dense();
  EXPECT_EQ(k(lat.index_of(0), lat.index_of(0)), cplx(0.0));
  EXPECT_EQ(k(lat.index_of(2), lat.index_of(2)), cplx(4.0));
  EXPECT_EQ(k(lat.index_of(-2), lat.index_of(-2)), cplx(4.0));
  EXPECT_EQ((k - Eigen::MatrixXcd(k.diagonal().asDiagonal())).norm(), 0.0);
  EXPECT_EQ(k.imag().norm(), 0.0);
}

TEST(SparseOperator, HermitianFlagEnforced) {
  const auto a = annihilation_operator(FockSpace{3});
  EXPECT_THROW(SparseOperator(a.space(), a.matrix(), true), std::invalid_argument);
  EXPECT_THROW(SparseOperator::hermitian(a.space(), a.matrix()), std::invalid_argument);
  EXPECT_THROW(SparseOperator(a.space(), SparseMatrix(4, 4), false), std::invalid_argument);
}

TEST(Tensor, DimensionsMixedProductAndAssociativity) {
  const auto a = annihilation_operator(FockSpace{3});
  const auto p = momentum_operator(MomentumLattice{2});
  const auto c = trig_operator(MomentumLattice{2}, TrigKind::sin2k);
  const auto ab = tensor(a, p);
  EXPECT_EQ(ab.dim(), 3 * 5);
  const SpaceDescriptor s = ab.space();
  const auto lhs = embed(s, 0, a) * embed(s, 1, p);
  EXPECT_NEAR((lhs.dense() - ab.dense()).norm(), 0.0, 1e-14);
  const auto left = tensor(tensor(a, p), c);
  const auto right = tensor(a, tensor(p, c));
  EXPECT_EQ((left.dense() - right.dense()).norm(), 0.0);
  EXPECT_TRUE(tensor(p, c).is_hermitian());
  EXPECT_FALSE(ab.is_hermitian());
}

TEST(Expectation, NumberOperatorAndTrace) {
  const FockSpace f{5};
  const auto n = number_operator(f);
  for (int k = 0; k < 5; ++k) {
    const StateVector psi(single_factor_space(f), unit(5, k));
    EXPECT_NEAR(std::abs(expectation(psi, n) - double(k)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(expectation(DensityMatrix::pure(psi), n) - double(k)), 0.0, 1e-15);
  }
  std::mt19937_64 rng(3);
  const SpaceDescriptor s({FockSpace{3}, MomentumLattice{1}});
  const auto rho = random_density(s, rng);
  EXPECT_NEAR(std::abs(expectation(rho, identity_operator(s)) - 1.0), 0.0, 1e-12);
}

TEST(PartialTrace, ProductStateAndBell) {
  const FockSpace f{2};
  const SpaceDescriptor s({f, f});
  const StateVector a(single_factor_space(f), Eigen::Vector2cd(0.6, cplx(0.0, 0.8)));
  const StateVector b(single_factor_space(f), Eigen::Vector2cd(1.0, 0.0));
  const StateVector parts[] = {a, b};
  const auto prod = product_state(parts);
  const auto red = partial_trace(DensityMatrix::pure(prod), {0});
  EXPECT_NEAR((red.matrix - DensityMatrix::pure(a).matrix).norm(), 0.0, 1e-15);

  Eigen::VectorXcd bell = Eigen::VectorXcd::Zero(4);
  bell(1) = bell(2) = 1.0 / std::sqrt(2.0);
  const auto half = partial_trace(DensityMatrix::pure(StateVector(s, bell)), {1});
  EXPECT_NEAR((half.matrix - 0.5 * Eigen::MatrixXcd::Identity(2, 2)).norm(), 0.0, 1e-15);
}

TEST(PartialTrace, PropertiesOnRandomStates) {
  std::mt19937_64 rng(11);
  const SpaceDescriptor s({MomentumLattice{1}, FockSpace{2}, FockSpace{3}});
  for (int trial = 0; trial < 5; ++trial) {
    const auto rho = random_density(s, rng);
    for (std::vector<std::size_t> keep : {std::vector<std::size_t>{0}, {1}, {2}, {0, 2}, {1, 2}}) {
      const auto red = partial_trace(rho, keep);
      EXPECT_NEAR(std::abs(red.trace() - rho.trace()), 0.0, 1e-10);
      EXPECT_LE(red.hermiticity_defect(), 1e-12);
    }
    const auto all = partial_trace(rho, {0, 1, 2});
    EXPECT_NEAR((all.matrix - rho.matrix).norm(), 0.0, 1e-14);
  }
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(s.total_dim());
  for (Index i = 0; i < v.size(); ++i) v(i) = cplx(g(rng), g(rng));
  const StateVector psi(s, v.normalized());
  const auto direct = reduced_density_matrix(psi, {2, 0});
  const auto via_rho = partial_trace(DensityMatrix::pure(psi), {0, 2});
  EXPECT_NEAR((direct.matrix - via_rho.matrix).norm(), 0.0, 1e-13);
  EXPECT_THROW(partial_trace(DensityMatrix::pure(psi), {3}), std::invalid_argument);
  EXPECT_THROW(partial_trace(DensityMatrix::pure(psi), {1, 1}), std::invalid_argument);
}

TEST(DensityMatrix, ValidateNamesViolation) {
  const SpaceDescriptor s({FockSpace{2}});
  EXPECT_NO_THROW(DensityMatrix(s, Eigen::Matrix2cd::Identity() * 0.5).validate());
  EXPECT_THROW(DensityMatrix(s, Eigen::Matrix2cd::Identity()).validate(), std::invalid_argument);
  Eigen::Matrix2cd neg;
  neg << 1.2, 0.0, 0.0, -0.2;
  EXPECT_THROW(DensityMatrix(s, neg).validate(), std::invalid_argument);
}

TEST(Leakage, CountsOuterTwoSites) {
  const SpaceDescriptor s({MomentumLattice{4}, FockSpace{2}});
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(s.total_dim());
  const auto inner = basis_state(s, {2, 1});
  const auto outer = basis_state(s, {-3, 0});
  v = (inner.amplitudes * std::sqrt(0.75) + outer.amplitudes * std::sqrt(0.25));
  const StateVector psi(s, v);
  EXPECT_NEAR(boundary_leakage(psi, 0), 0.25, 1e-15);
  EXPECT_NEAR(boundary_leakage(DensityMatrix::pure(psi), 0), 0.25, 1e-15);
  EXPECT_NEAR(max_boundary_leakage(psi), 0.25, 1e-15);
  EXPECT_THROW(boundary_leakage(psi, 1), std::invalid_argument);
}
