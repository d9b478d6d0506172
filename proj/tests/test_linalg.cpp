#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lrkb/linalg.hpp"
#include "lrkb/rng.hpp"
#include "oracles.hpp"

using namespace lrkb;

namespace {

Matrix hurwitz(Index n, NormalStream& rng) {
  Matrix a = rng.matrix(n, n);
  const double shift = Eigen::EigenSolver<Matrix>(a).eigenvalues().real().maxCoeff();
  return a - (shift + 0.5) * Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("lyapunov solution agrees with the Kronecker system") {
  NormalStream rng(11, 0);
  for (Index n : {1, 2, 3, 5, 8}) {
    const Matrix a = hurwitz(n, rng);
    const Matrix g = rng.matrix(n, n);
    const Matrix q = g * g.transpose();
    const Matrix x = solve_lyapunov(a, q);
    const Matrix ref = oracle::lyapunov_kron(a, q);
    CHECK((x - ref).norm() <= 1e-10 * (1.0 + ref.norm()));
    CHECK((a * x + x * a.transpose() + q).norm() <= 1e-10 * (1.0 + q.norm()) * (1.0 + x.norm()));
  }
}

TEST_CASE("lyapunov accepts an anti-stable drift") {
  NormalStream rng(12, 0);
  const Matrix a = -hurwitz(4, rng);
  const Matrix q = symmetrize(rng.matrix(4, 4));
  const Matrix x = solve_lyapunov(a, q);
  CHECK((x - oracle::lyapunov_kron(a, q)).norm() < 1e-9 * (1.0 + x.norm()));
}

TEST_CASE("sylvester solution agrees with the Kronecker system") {
  NormalStream rng(13, 0);
  const Matrix a = rng.matrix(3, 3) + 4.0 * Matrix::Identity(3, 3);
  const Matrix b = rng.matrix(2, 2) + 4.0 * Matrix::Identity(2, 2);
  const Matrix c = rng.matrix(3, 2);
  const CMatrix x = solve_sylvester(a.cast<Complex>(), b.cast<Complex>(), c.cast<Complex>());
  const Matrix big = oracle::kron(Matrix::Identity(2, 2), a) + oracle::kron(b.transpose(), Matrix::Identity(3, 3));
  const Matrix ref = oracle::unvec(big.fullPivLu().solve(oracle::vec(c)), 3, 2);
  CHECK((x.real() - ref).norm() < 1e-12);
  CHECK(x.imag().norm() < 1e-12);
}

TEST_CASE("orthonormalize uses the positive diagonal convention") {
  NormalStream rng(14, 0);
  const Matrix m = rng.matrix(6, 3);
  const Matrix q = orthonormalize(m);
  CHECK(orth_error(q) < 1e-14);
  const Matrix r = q.transpose() * m;
  for (Index i = 0; i < 3; ++i) CHECK(r(i, i) > 0.0);
  CHECK(r.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm() < 1e-12);
  CHECK((q * r - m).norm() < 1e-12);
}

TEST_CASE("orthonormalize rejects wide input") {
  CHECK_THROWS(orthonormalize(Matrix::Ones(2, 3)));
}

TEST_CASE("principal angle between planar lines is the geometric angle") {
  for (double theta : {0.0, 0.1, 0.7, 1.2, std::numbers::pi / 2}) {
    Matrix u(2, 1), v(2, 1);
    u << 1.0, 0.0;
    v << std::cos(theta), std::sin(theta);
    CHECK(max_principal_angle(u, v) == doctest::Approx(theta).epsilon(1e-12));
  }
}

TEST_CASE("principal angle matches the projector distance") {
  NormalStream rng(15, 0);
  for (int k = 0; k < 10; ++k) {
    const Matrix u = orthonormalize(rng.matrix(7, 3));
    const Matrix v = orthonormalize(u + 0.3 * rng.matrix(7, 3));
    CHECK(std::sin(max_principal_angle(u, v)) ==
          doctest::Approx(oracle::subspace_sine(u, v)).epsilon(1e-10));
  }
}

TEST_CASE("orthogonal complement completes an orthonormal basis") {
  NormalStream rng(16, 0);
  const Matrix u = orthonormalize(rng.matrix(5, 2));
  const Matrix w = orthogonal_complement(u);
  REQUIRE(w.cols() == 3);
  Matrix full(5, 5);
  full << u, w;
  CHECK(orth_error(full) < 1e-12);
}

TEST_CASE("symmetric eigenvalue extremes and spectral norm") {
  Matrix p(3, 3);
  p << 4, 1, 0, 1, 3, 0, 0, 0, -2;
  const double s = std::sqrt(5.0) / 2.0;
  CHECK(max_symmetric_eigenvalue(p) == doctest::Approx(3.5 + s));
  CHECK(min_symmetric_eigenvalue(p) == doctest::Approx(-2.0));
  Matrix m(2, 2);
  m << 0, 2, 0, 0;
  CHECK(spectral_norm(m) == doctest::Approx(2.0));
  CHECK(all_finite(m));
  m(0, 0) = std::nan("");
  CHECK_FALSE(all_finite(m));
}
