#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lrkb/ensembles.hpp"
#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "oracles.hpp"

using namespace lrkb;

namespace {

Matrix line(double theta) {
  Matrix u(2, 1);
  u << std::cos(theta), std::sin(theta);
  return u;
}

// Jacobian of X -> W^T F(U + W X) at X = 0 by central differences, where W
// spans the complement of span(U). Its spectrum is the normal linearization.
CVector normal_linearization(const Matrix& a, const Matrix& u) {
  const Matrix w = oracle::projector(u);
  Eigen::JacobiSVD<Matrix> svd(Matrix::Identity(a.rows(), a.rows()) - w, Eigen::ComputeFullU);
  const Index n = a.rows(), r = u.cols(), m = n - r;
  const Matrix comp = svd.matrixU().leftCols(m);
  const double h = 1e-6;
  Matrix jac(m * r, m * r);
  for (Index k = 0; k < m * r; ++k) {
    Matrix dx = Matrix::Zero(m, r);
    dx(k % m, k / m) = h;
    const Matrix fp = comp.transpose() * oja_vector_field(a, u + comp * dx);
    const Matrix fm = comp.transpose() * oja_vector_field(a, u - comp * dx);
    jac.col(k) = oracle::vec((fp - fm) / (2 * h));
  }
  return Eigen::EigenSolver<Matrix>(jac, false).eigenvalues();
}

}  // namespace

TEST_CASE("planar flow for a diagonal matrix follows tan(theta) = tan(theta0) exp(-dt)") {
  Matrix a(2, 2);
  a << 2, 0, 0, -1;
  for (double eps : {1.0, 0.5}) {
    const double theta0 = 1.1;
    OjaOptions o;
    o.epsilon = eps;
    o.dt = 1e-3;
    o.t_max = 2.0;
    o.stop_on_convergence = false;
    o.record_stride = 10;
    const OjaTrajectory traj = integrate(a, StiefelFrame(line(theta0)), o);
    CHECK(traj.final_time() == doctest::Approx(2.0));
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      const double expected = std::atan(std::tan(theta0) * std::exp(-3.0 * traj.times[k] / eps));
      worst = std::max(worst, max_principal_angle(traj.frames[k].matrix(), line(expected)));
      CHECK(traj.orth_errors[k] < 1e-13);
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("vector field vanishes exactly on invariant subspaces") {
  NormalStream rng(41, 0);
  const Matrix a = random_gapped_matrix(6, 2, rng);
  const StiefelFrame u = stable_equilibrium(a, 2);
  CHECK(residual(a, u) < 1e-12);
  CHECK(oja_vector_field(a, u.matrix(), 0.25).norm() < 4e-12);
  const StiefelFrame v = random_stiefel(6, 2, rng);
  CHECK(residual(a, v) == doctest::Approx(oja_vector_field(a, v.matrix()).norm()));
  CHECK(oja_vector_field(a, v.matrix(), 0.5).norm() == doctest::Approx(2.0 * residual(a, v)));
}

TEST_CASE("stable equilibrium spans the dominant eigenvectors") {
  NormalStream rng(42, 0);
  Matrix vecs = rng.matrix(5, 5) + 3.0 * Matrix::Identity(5, 5);
  Vector d(5);
  d << 4, 1.5, 0.5, -1, -3;
  const Matrix a = vecs * d.asDiagonal() * vecs.inverse();
  for (int r = 1; r <= 4; ++r) {
    const StiefelFrame u = stable_equilibrium(a, r);
    CHECK(orth_error(u.matrix()) < 1e-13);
    CHECK(oracle::subspace_sine(u.matrix(), vecs.leftCols(r)) < 1e-9);
  }
  CHECK((stable_equilibrium(a, 5).matrix() - Matrix::Identity(5, 5)).norm() == 0.0);
}

TEST_CASE("stable equilibrium for a complex pair is a real basis of its plane") {
  Matrix a = Matrix::Zero(3, 3);
  a.topLeftCorner(2, 2) << 1, -2, 2, 1;
  a(2, 2) = -1;
  const StiefelFrame u = stable_equilibrium(a, 2);
  CHECK(oracle::subspace_sine(u.matrix(), Matrix::Identity(3, 2)) < 1e-12);
  CHECK_THROWS_AS(stable_equilibrium(a, 1), GapError);
}

TEST_CASE("real basis rejects a subspace that is not closed under conjugation") {
  CMatrix b(2, 1);
  b << Complex(1, 0), Complex(0, 1);
  CHECK_THROWS_AS(real_basis(b), GapError);
  b << Complex(0, 2), Complex(0, 1);
  const Matrix r = real_basis(b);
  CHECK(oracle::subspace_sine(r, (Matrix(2, 1) << 2, 1).finished()) < 1e-12);
}

TEST_CASE("enumeration lists every conjugation-closed selection once") {
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << 3, 1, -2;
  for (int r = 1; r <= 2; ++r) {
    const EquilibriumEnumeration e = enumerate_equilibria(a, r);
    REQUIRE(e.families.size() == 3);
    CHECK_FALSE(e.truncated);
    int stable = 0;
    for (const EquilibriumFamily& f : e.families) {
      stable += f.is_stable;
      CHECK(residual(a, f.representative) < 1e-12);
    }
    CHECK(stable == 1);
    CHECK(e.families.front().is_stable);
  }
  Matrix c = Matrix::Zero(3, 3);
  c.topLeftCorner(2, 2) << 1, -1, 1, 1;
  c(2, 2) = -1;
  CHECK(enumerate_equilibria(c, 1).families.size() == 1);
  CHECK(enumerate_equilibria(c, 2).families.size() == 1);
  const EquilibriumEnumeration capped = enumerate_equilibria(Matrix(Vector::LinSpaced(8, 1, 8).asDiagonal()), 4, 5);
  CHECK(capped.families.size() == 5);
  CHECK(capped.truncated);
}

TEST_CASE("linearization rate matches the finite-difference normal Jacobian") {
  NormalStream rng(43, 0);
  SpectrumOptions so;
  so.complex_fraction = 0.0;
  const Matrix a = random_gapped_matrix(5, 2, rng, so);
  const SpectralData spec = eigs_sorted(a);
  const EquilibriumEnumeration e = enumerate_equilibria(a, 2);
  REQUIRE(e.families.size() == 10);
  for (const EquilibriumFamily& f : e.families) {
    const CVector lin = normal_linearization(a, f.representative.matrix());
    const double oracle_rate = lin.real().maxCoeff();
    CHECK(f.linearization_rate == doctest::Approx(oracle_rate).epsilon(1e-5));
    CHECK(f.is_stable == (oracle_rate < 0.0));
    const StabilityVerdict v = classify_stability(f, spec);
    CHECK(v.is_stable == f.is_stable);
  }
}

TEST_CASE("selections sharing a real part are degenerate and never stable") {
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << 1, 1, -1;
  const SpectralData spec = eigs_sorted(a);
  const StabilityVerdict v = classify_stability(std::vector<int>{0}, spec);
  CHECK(v.degenerate);
  CHECK_FALSE(v.is_stable);
  const StabilityVerdict w = classify_stability(std::vector<int>{0, 1}, spec);
  CHECK_FALSE(w.degenerate);
  CHECK(w.is_stable);
}

TEST_CASE("tilted frames realize the requested discarded component") {
  NormalStream rng(44, 0);
  const Matrix a = random_gapped_matrix(7, 3, rng);
  const SchurData schur = ordered_schur(a, 3);
  const StiefelFrame dom = stable_equilibrium(a, 3);
  CHECK(discarded_component(schur, dom) < 1e-20);
  for (double target : {0.0, 0.1, 0.5, 0.9}) {
    const StiefelFrame u0 = tilted_frame(dom, target, rng);
    CHECK(orth_error(u0.matrix()) < 1e-13);
    CHECK(discarded_component(schur, u0) == doctest::Approx(target).epsilon(1e-10));
  }
}

TEST_CASE("attraction domain membership compares against beta") {
  Matrix a(2, 2);
  a << 2, 2, 0, 0;
  const SchurData schur = ordered_schur(a, 1);
  const AttractionEstimate est = attraction_beta(schur);
  // F2 is the sine of the angle to e1, so the boundary is at sin^2 = 1/2.
  CHECK(in_attraction_domain(schur, est, StiefelFrame(line(0.7))).inside);
  CHECK_FALSE(in_attraction_domain(schur, est, StiefelFrame(line(0.9))).inside);
  const AttractionCheck c = in_attraction_domain(schur, est, StiefelFrame(line(0.3)));
  CHECK(c.lambda_max_f2 == doctest::Approx(std::pow(std::sin(0.3), 2)));
  CHECK(c.margin == doctest::Approx(0.5 - c.lambda_max_f2));
}

TEST_CASE("integration reaches the dominant subspace and stops on convergence") {
  NormalStream rng(45, 0);
  const Matrix a = random_gapped_matrix(8, 3, rng);
  const StiefelFrame u0 = random_stiefel(8, 3, rng);
  const OjaTrajectory traj = integrate(a, u0);
  CHECK(traj.converged);
  CHECK(traj.final_residual() < kTolConv);
  CHECK(max_principal_angle(traj.final().matrix(), stable_equilibrium(a, 3).matrix()) < 1e-8);
  CHECK(traj.frames.size() == traj.times.size());
  CHECK(traj.times.front() == 0.0);
}

TEST_CASE("integration options are validated") {
  Matrix a(2, 2);
  a << 2, 0, 0, -1;
  const StiefelFrame u0(line(0.3));
  OjaOptions o;
  o.dt = 1.0;
  CHECK_THROWS_AS(integrate(a, u0, o), ConfigError);
  o = {};
  o.epsilon = 0.0;
  CHECK_THROWS_AS(integrate(a, u0, o), ConfigError);
  o.epsilon = 1.5;
  CHECK_THROWS_AS(integrate(a, u0, o), ConfigError);
  CHECK_THROWS_AS(integrate(Matrix::Identity(2, 2), u0), Error);
}
