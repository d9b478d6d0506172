#include <cmath>

#include "doctest.h"
#include "lrkb/ensembles.hpp"
#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "lrkb/systems.hpp"
#include "oracles.hpp"

using namespace lrkb;

namespace {

LtiSystem diagonal_system(std::initializer_list<double> d) {
  const Index n = static_cast<Index>(d.size());
  LtiSystem sys;
  sys.a = Matrix::Zero(n, n);
  Index i = 0;
  for (double x : d) sys.a(i, i) = x, ++i;
  sys.g = Matrix::Identity(n, n);
  sys.c = Matrix::Ones(1, n);
  sys.h = Matrix::Identity(1, 1);
  return sys;
}

// Kalman rank test [B, AB, ..., A^{n-1}B], valid for moderate sizes.
bool kalman_controllable(const Matrix& a, const Matrix& b) {
  const Index n = a.rows();
  Matrix k(n, n * b.cols());
  Matrix block = b;
  for (Index i = 0; i < n; ++i) {
    k.middleCols(i * b.cols(), b.cols()) = block;
    block = a * block;
  }
  Eigen::FullPivLU<Matrix> lu(k);
  lu.setThreshold(1e-10);
  return lu.rank() == n;
}

}  // namespace

TEST_CASE("validate rejects bad shapes, non-finite entries and singular noise") {
  LtiSystem sys = diagonal_system({1, -1});
  CHECK_NOTHROW(validate(sys));
  LtiSystem bad = sys;
  bad.c = Matrix::Ones(1, 3);
  CHECK_THROWS_AS(validate(bad), ShapeError);
  bad = sys;
  bad.g = Matrix::Ones(3, 3);
  CHECK_THROWS_AS(validate(bad), ShapeError);
  bad = sys;
  bad.a(0, 1) = std::nan("");
  CHECK_THROWS_AS(validate(bad), ShapeError);
  bad = sys;
  bad.h = Matrix::Zero(1, 1);
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = sys;
  bad.c = Matrix::Ones(2, 2);
  bad.h = Matrix::Ones(2, 2);
  try {
    validate(bad);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.min_eigenvalue() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("information and precision matrices") {
  LtiSystem sys = diagonal_system({1, 2});
  sys.h = 2.0 * Matrix::Identity(1, 1);
  CHECK(sys.noise_precision()(0, 0) == doctest::Approx(0.25));
  CHECK((sys.information() - 0.25 * Matrix::Ones(2, 2)).norm() < 1e-15);
}

TEST_CASE("pbh tests on hand-made examples") {
  const Matrix a = diagonal_system({1, 2}).a;
  Matrix c(1, 2);
  c << 1, 0;
  CHECK_FALSE(pbh_observable(a, c));
  c << 1, 1;
  CHECK(pbh_observable(a, c));
  // Repeated eigenvalue: one output cannot see a diagonal double mode.
  const Matrix a2 = Matrix::Identity(2, 2);
  CHECK_FALSE(pbh_observable(a2, Matrix::Ones(1, 2)));
  CHECK(pbh_observable(a2, Matrix::Identity(2, 2)));
  // A Jordan block is observable from its last coordinate only through the chain.
  Matrix j(2, 2);
  j << 0, 1, 0, 0;
  Matrix first(1, 2), second(1, 2);
  first << 1, 0;
  second << 0, 1;
  CHECK(pbh_observable(j, first));
  CHECK_FALSE(pbh_observable(j, second));
  CHECK(pbh_controllable(j, second.transpose()));
  CHECK_FALSE(pbh_controllable(j, first.transpose()));
}

TEST_CASE("pbh agrees with the Kalman rank test on random pairs") {
  NormalStream rng(31, 0);
  int disagreements = 0;
  for (int k = 0; k < 40; ++k) {
    const Index n = 2 + k % 4;
    Matrix a = rng.matrix(n, n);
    Matrix b = rng.matrix(n, 1);
    if (k % 3 == 0) {
      // Hide a mode: block-triangular A with b in the invariant part.
      a.bottomLeftCorner(1, n - 1).setZero();
      b(n - 1, 0) = 0.0;
    }
    disagreements += pbh_controllable(a, b) != kalman_controllable(a, b);
    disagreements += pbh_observable(a, b.transpose()) != kalman_controllable(a.transpose(), b);
  }
  CHECK(disagreements == 0);
}

TEST_CASE("reduce projects the triple through the frame") {
  NormalStream rng(32, 0);
  const Matrix a = random_gapped_matrix(5, 2, rng);
  const LtiSystem sys = random_system(a, rng, 2);
  const StiefelFrame u = random_stiefel(5, 2, rng);
  const ReducedSystem red = reduce(sys, u);
  const Matrix& um = u.matrix();
  CHECK((red.a_u - um.transpose() * sys.a * um).norm() < 1e-14);
  CHECK((red.c_u - sys.c * um).norm() < 1e-14);
  CHECK((red.g_u - um.transpose() * sys.g).norm() < 1e-14);
  CHECK_THROWS_AS(reduce(sys, random_stiefel(4, 2, rng)), ShapeError);
}

TEST_CASE("stiefel frames validate orthonormality") {
  CHECK_THROWS_AS(StiefelFrame(Matrix::Ones(3, 1)), FrameError);
  const StiefelFrame f = StiefelFrame::orthonormalized(Matrix::Ones(3, 1));
  CHECK(orth_error(f.matrix()) < 1e-15);
  NormalStream rng(33, 0);
  const StiefelFrame r = random_stiefel(6, 3, rng);
  CHECK(orth_error(r.matrix()) < 1e-14);
  const Matrix w = random_orthogonal(3, rng);
  CHECK((r.rotated(w).matrix() - r.matrix() * w).norm() < 1e-15);
  CHECK(random_stiefel(6, 3, 99).matrix() == random_stiefel(6, 3, 99).matrix());
}

TEST_CASE("minimal rank counts unstable modes and moves past ties") {
  CHECK(minimal_rank(diagonal_system({2, 1, -1, -2})) == 2);
  CHECK(minimal_rank(diagonal_system({-1, -2})) == 0);
  CHECK(minimal_rank(diagonal_system({-1, -2}), 1) == 1);
  CHECK(minimal_rank(diagonal_system({2, 0, -1})) == 2);
  CHECK(minimal_rank(diagonal_system({2, 0, -1}), 0, 0.5) == 1);
  // Eigenvalues 1 +- i must stay together.
  LtiSystem sys = diagonal_system({0, 0, -3});
  sys.a.topLeftCorner(2, 2) << 1, -1, 1, 1;
  CHECK(minimal_rank(sys, 1) == 2);
  CHECK_THROWS_AS(minimal_rank(diagonal_system({1, 1})), GapError);
}

TEST_CASE("random systems pass the pair tests and have the requested output size") {
  NormalStream rng(34, 0);
  for (int k = 0; k < 10; ++k) {
    const Matrix a = random_gapped_matrix(6, 3, rng);
    const LtiSystem sys = random_system(a, rng, 2);
    CHECK(sys.p() == 2);
    CHECK(pbh_controllable(sys.a, sys.g));
    CHECK(pbh_observable(sys.a, sys.c));
    CHECK_NOTHROW(validate(sys));
  }
}
