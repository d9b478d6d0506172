#include "lrkb/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "lrkb/errors.hpp"

namespace lrkb {

Matrix orthonormalize(const Matrix& m) {
  const Index n = m.rows();
  const Index r = m.cols();
  if (r > n) throw ShapeError("orthonormalize: more columns than rows");
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  const auto& packed = qr.matrixQR();
  for (Index j = 0; j < r; ++j) {
    if (packed(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

double orth_error(const Matrix& u) {
  return (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double min_symmetric_eigenvalue(const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(p), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_symmetric_eigenvalue(const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(p), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(p.rows() - 1);
}

CMatrix solve_sylvester(const CMatrix& a, const CMatrix& b, const CMatrix& c) {
  const Index m = a.rows();
  const Index n = b.rows();
  if (a.cols() != m || b.cols() != n || c.rows() != m || c.cols() != n)
    throw ShapeError("solve_sylvester: dimension mismatch");
  Eigen::ComplexSchur<CMatrix> sa(a);
  Eigen::ComplexSchur<CMatrix> sb(b);
  if (sa.info() != Eigen::Success || sb.info() != Eigen::Success)
    throw ConvergenceError("solve_sylvester: Schur iteration failed",
                           Eigen::ComplexSchur<CMatrix>::m_maxIterationsPerRow *
                               std::max(m, n),
                           0.0);
  const CMatrix& ta = sa.matrixT();
  const CMatrix& tb = sb.matrixT();
  // T_a Y + Y T_b = F, both factors upper triangular: sweep columns of Y.
  CMatrix f = sa.matrixU().adjoint() * c * sb.matrixU();
  CMatrix y(m, n);
  for (Index j = 0; j < n; ++j) {
    CVector rhs = f.col(j);
    if (j > 0) rhs.noalias() -= y.leftCols(j) * tb.col(j).head(j);
    CMatrix shifted = ta;
    shifted.diagonal().array() += tb(j, j);
    y.col(j) = shifted.triangularView<Eigen::Upper>().solve(rhs);
  }
  return sa.matrixU() * y * sb.matrixU().adjoint();
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  const CMatrix ac = a.cast<Complex>();
  const CMatrix x = solve_sylvester(ac, ac.transpose(), (-q).cast<Complex>());
  return symmetrize(x.real());
}

double max_principal_angle(const Matrix& u, const Matrix& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw ShapeError("max_principal_angle: dimension mismatch");
  // sin(theta_max) = ||(I - V V^T) U||_2, accurate for small angles.
  const Matrix off = u - v * (v.transpose() * u);
  const double s = std::min(1.0, spectral_norm(off));
  return std::asin(s);
}

Matrix orthogonal_complement(const Matrix& u) {
  const Index n = u.rows();
  const Index r = u.cols();
  Eigen::HouseholderQR<Matrix> qr(u);
  Matrix full = qr.householderQ() * Matrix::Identity(n, n);
  return full.rightCols(n - r);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace lrkb
