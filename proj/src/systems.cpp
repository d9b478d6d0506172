#include "lrkb/systems.hpp"

#include <algorithm>
#include <sstream>

#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/spectral.hpp"

namespace lrkb {

namespace {

void expect_shape(const Matrix& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "matrix " << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows
       << "x" << cols;
    throw ShapeError(os.str());
  }
  if (!m.allFinite()) throw ShapeError(std::string("matrix ") + name + " has non-finite entries");
}

Index numerical_rank(const CMatrix& m, double tol_rank) {
  Eigen::JacobiSVD<CMatrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = tol_rank * s(0);
  return (s.array() > cutoff).count();
}

std::vector<Complex> distinct_eigenvalues(const Matrix& a) {
  const CVector ev = sorted_eigenvalues(a);
  std::vector<Complex> out;
  for (Index i = 0; i < ev.size(); ++i)
    if (out.empty() || out.back() != ev[i]) out.push_back(ev[i]);
  return out;
}

}  // namespace

Matrix LtiSystem::noise_precision() const {
  const Matrix r = noise_intensity();
  return r.llt().solve(Matrix::Identity(r.rows(), r.cols()));
}

Matrix LtiSystem::information() const {
  return c.transpose() * noise_precision() * c;
}

LtiSystem validate(const LtiSystem& sys, double tol_pd) {
  const Index n = sys.a.rows();
  const Index p = sys.c.rows();
  if (n == 0) throw ShapeError("system has zero states");
  if (p == 0) throw ShapeError("system has zero outputs");
  expect_shape(sys.a, n, n, "A");
  expect_shape(sys.g, n, n, "G");
  expect_shape(sys.c, p, n, "C");
  expect_shape(sys.h, p, p, "H");
  const double min_ev = min_symmetric_eigenvalue(sys.noise_intensity());
  if (!(min_ev > tol_pd)) {
    std::ostringstream os;
    os << "HH^T is not positive definite: minimum eigenvalue " << min_ev << " <= " << tol_pd;
    throw ValidationError(os.str(), min_ev);
  }
  return sys;
}

bool pbh_observable(const Matrix& a, const Matrix& c, double tol_rank) {
  const Index n = a.rows();
  if (a.cols() != n || c.cols() != n) throw ShapeError("pbh_observable: dimension mismatch");
  CMatrix stacked(c.rows() + n, n);
  stacked.topRows(c.rows()) = c.cast<Complex>();
  for (const Complex lambda : distinct_eigenvalues(a)) {
    stacked.bottomRows(n) = a.cast<Complex>();
    stacked.bottomRows(n).diagonal().array() -= lambda;
    if (numerical_rank(stacked, tol_rank) < n) return false;
  }
  return true;
}

bool pbh_controllable(const Matrix& a, const Matrix& g, double tol_rank) {
  const Index n = a.rows();
  if (a.cols() != n || g.rows() != n) throw ShapeError("pbh_controllable: dimension mismatch");
  CMatrix joined(n, g.cols() + n);
  joined.leftCols(g.cols()) = g.cast<Complex>();
  for (const Complex lambda : distinct_eigenvalues(a)) {
    joined.rightCols(n) = a.cast<Complex>();
    joined.rightCols(n).diagonal().array() -= lambda;
    if (numerical_rank(joined, tol_rank) < n) return false;
  }
  return true;
}

ReducedSystem reduce(const LtiSystem& sys, const StiefelFrame& frame, double tol_orth) {
  const Matrix& u = frame.matrix();
  if (u.rows() != sys.n()) throw ShapeError("reduce: frame rows differ from state dimension");
  const double err = orth_error(u);
  if (!(err <= tol_orth)) {
    std::ostringstream os;
    os << "reduce: frame is not orthonormal, ||U^T U - I||_F = " << err;
    throw FrameError(os.str(), err);
  }
  return ReducedSystem{u.transpose() * sys.a * u, sys.c * u, u.transpose() * sys.g, frame};
}

int minimal_rank(const LtiSystem& sys, int min_rank, double threshold, double tol_gap) {
  const CVector ev = sorted_eigenvalues(sys.a);
  const int n = static_cast<int>(ev.size());
  const int unstable = count_unstable(ev, threshold);
  const int start = std::max(unstable, min_rank);
  if (start == 0) return 0;
  for (int r = start; r <= n - 1; ++r)
    if (spectral_gap_ok(ev, r, tol_gap)) return r;
  std::ostringstream os;
  os << "no rank in " << start << ".." << n - 1 << " falls in a spectral gap ("
     << unstable << " eigenvalues with Re >= " << threshold << ")";
  const int at = std::clamp(start, 1, std::max(1, n - 1));
  throw GapError(os.str(), at, ev[at - 1], n > 1 ? ev[at] : ev[at - 1]);
}

}  // namespace lrkb
