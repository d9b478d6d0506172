#include "lrkb/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lrkb/errors.hpp"

namespace lrkb {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
// Diagonal entries closer than this (relative to ||A||) share a cluster.
constexpr double kClusterTol = 1e-8;

void require_square_finite(const Matrix& a, const char* where) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << where << ": matrix is " << a.rows() << "x" << a.cols() << ", expected square";
    throw ShapeError(os.str());
  }
  if (!a.allFinite()) throw ShapeError(std::string(where) + ": non-finite entries");
}

/// Snaps near-real values to the real axis and makes conjugate partners
/// exact conjugates of each other.
void clean_real_spectrum(CVector& z, double scale) {
  const Index n = z.size();
  const double snap = 64.0 * kEps * scale;
  std::vector<Index> positive, negative;
  for (Index i = 0; i < n; ++i) {
    if (std::abs(z[i].imag()) <= snap) {
      z[i] = Complex(z[i].real(), 0.0);
    } else if (z[i].imag() > 0.0) {
      positive.push_back(i);
    } else {
      negative.push_back(i);
    }
  }
  std::vector<bool> used(negative.size(), false);
  for (Index p : positive) {
    const Complex target = std::conj(z[p]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = negative.size();
    for (std::size_t k = 0; k < negative.size(); ++k) {
      if (used[k]) continue;
      const double d = std::abs(z[negative[k]] - target);
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    if (best_k == negative.size()) continue;
    used[best_k] = true;
    const Index q = negative[best_k];
    const double re = 0.5 * (z[p].real() + z[q].real());
    const double im = 0.5 * (z[p].imag() - z[q].imag());
    z[p] = Complex(re, im);
    z[q] = Complex(re, -im);
  }
}

/// Swaps diagonal entries k and k+1 of the triangular factor.
void swap_adjacent(ComplexSchurForm& form, Index k) {
  CMatrix& t = form.upper;
  const Complex a = t(k, k);
  const Complex b = t(k + 1, k + 1);
  if (a == b) return;
  // First column of the rotation is the eigenvector of the 2x2 block for b.
  Complex x1 = t(k, k + 1);
  Complex x2 = b - a;
  const double norm = std::hypot(std::abs(x1), std::abs(x2));
  x1 /= norm;
  x2 /= norm;
  Eigen::Matrix2cd q;
  q << x1, -std::conj(x2), x2, std::conj(x1);
  t.middleRows(k, 2) = q.adjoint() * t.middleRows(k, 2);
  t.middleCols(k, 2) = t.middleCols(k, 2) * q;
  form.unitary.middleCols(k, 2) = form.unitary.middleCols(k, 2) * q;
  t(k + 1, k) = Complex(0.0, 0.0);
  t(k, k) = b;
  t(k + 1, k + 1) = a;
}

/// Moves the entry at position `from` up to position `to` (to <= from).
void bubble_up(ComplexSchurForm& form, Index from, Index to, std::vector<Index>& ids) {
  for (Index i = from; i > to; --i) {
    swap_adjacent(form, i - 1);
    std::swap(ids[i - 1], ids[i]);
  }
}

std::vector<Index> sorted_order(const CVector& z) {
  std::vector<Index> order(z.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) {
    return eigenvalue_precedes(z[i], z[j]);
  });
  return order;
}

ComplexSchurForm raw_schur(const Matrix& a, bool compute_u) {
  const Index n = a.rows();
  Eigen::ComplexSchur<CMatrix> cs(n);
  cs.compute(a.cast<Complex>(), compute_u);
  if (cs.info() != Eigen::Success) {
    const long iters = Eigen::ComplexSchur<CMatrix>::m_maxIterationsPerRow * n;
    std::ostringstream os;
    os << "complex Schur iteration did not converge within " << iters << " iterations";
    throw ConvergenceError(os.str(), iters, std::numeric_limits<double>::quiet_NaN());
  }
  ComplexSchurForm form;
  form.upper = cs.matrixT().triangularView<Eigen::Upper>();
  if (compute_u) form.unitary = cs.matrixU();
  CVector diag = form.upper.diagonal();
  clean_real_spectrum(diag, std::max(1.0, a.norm()));
  form.upper.diagonal() = diag;
  return form;
}

std::string format_complex(Complex z) {
  std::ostringstream os;
  os.precision(17);
  os << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

}  // namespace

bool eigenvalue_precedes(Complex a, Complex b) noexcept {
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

ComplexSchurForm sorted_complex_schur(const Matrix& a) {
  require_square_finite(a, "sorted_complex_schur");
  const Index n = a.rows();
  if (n == 0) return {};
  ComplexSchurForm form = raw_schur(a, true);
  const CVector diag = form.upper.diagonal();
  const std::vector<Index> order = sorted_order(diag);
  std::vector<Index> ids(n);
  std::iota(ids.begin(), ids.end(), Index{0});
  for (Index k = 0; k < n; ++k) {
    const Index at = std::find(ids.begin() + k, ids.end(), order[k]) - ids.begin();
    bubble_up(form, at, k, ids);
  }
  return form;
}

void move_selected_to_front(ComplexSchurForm& form, const std::vector<bool>& selected) {
  const Index n = form.upper.rows();
  if (static_cast<Index>(selected.size()) != n)
    throw ShapeError("move_selected_to_front: selection size mismatch");
  std::vector<Index> ids(n);
  std::iota(ids.begin(), ids.end(), Index{0});
  Index front = 0;
  for (Index id = 0; id < n; ++id) {
    if (!selected[id]) continue;
    const Index at = std::find(ids.begin(), ids.end(), id) - ids.begin();
    bubble_up(form, at, front, ids);
    ++front;
  }
}

CVector sorted_eigenvalues(const Matrix& a) {
  require_square_finite(a, "sorted_eigenvalues");
  if (a.rows() == 0) return {};
  const CVector diag = raw_schur(a, false).upper.diagonal();
  const std::vector<Index> order = sorted_order(diag);
  CVector out(diag.size());
  for (Index k = 0; k < diag.size(); ++k) out[k] = diag[order[k]];
  return out;
}

CVector sorted_eigenvalues_extended(const ExtMatrix& a) {
  if (a.rows() != a.cols() || !a.allFinite())
    throw ShapeError("sorted_eigenvalues_extended: matrix must be square and finite");
  const Index n = a.rows();
  if (n == 0) return {};
  using ExtComplexMatrix = Eigen::Matrix<std::complex<long double>, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::ComplexSchur<ExtComplexMatrix> cs(n);
  cs.compute(a.cast<std::complex<long double>>(), false);
  if (cs.info() != Eigen::Success) {
    const long iters = Eigen::ComplexSchur<ExtComplexMatrix>::m_maxIterationsPerRow * n;
    throw ConvergenceError("complex Schur iteration did not converge", iters,
                           std::numeric_limits<double>::quiet_NaN());
  }
  CVector diag(n);
  for (Index i = 0; i < n; ++i) {
    const std::complex<long double> z = cs.matrixT()(i, i);
    diag[i] = Complex(static_cast<double>(z.real()), static_cast<double>(z.imag()));
  }
  clean_real_spectrum(diag, std::max(1.0, static_cast<double>(a.norm())));
  const std::vector<Index> order = sorted_order(diag);
  CVector out(n);
  for (Index k = 0; k < n; ++k) out[k] = diag[order[k]];
  return out;
}

SpectralData eigs_sorted(const Matrix& a) {
  const ComplexSchurForm form = sorted_complex_schur(a);
  const Index n = a.rows();
  SpectralData out;
  out.eigenvalues = form.upper.diagonal();
  if (n == 0) return out;

  const CMatrix& t = form.upper;
  const double tol = kClusterTol * std::max(1.0, a.norm());
  // Decouple each cluster from the ones above it: T Z_J = Z_J T_JJ with
  // Z_J = [*; I; 0], solved row by row upwards.
  CMatrix z = CMatrix::Zero(n, n);
  Index start = 0;
  while (start < n) {
    Index end = start + 1;
    while (end < n && std::abs(t(end, end) - t(start, start)) <= tol) ++end;
    const Index q = end - start;
    z.block(start, start, q, q).setIdentity();
    const CMatrix t_jj = t.block(start, start, q, q);
    for (Index i = start - 1; i >= 0; --i) {
      const Index span = end - i - 1;
      Eigen::RowVectorXcd rhs = t.row(i).segment(i + 1, span) * z.block(i + 1, start, span, q);
      CMatrix shifted = t_jj;
      shifted.diagonal().array() -= t(i, i);
      const CVector zi =
          shifted.triangularView<Eigen::Upper>().transpose().solve(rhs.transpose());
      z.block(i, start, 1, q) = zi.transpose();
    }
    start = end;
  }
  out.eigenvectors = form.unitary * z;
  for (Index j = 0; j < n; ++j) out.eigenvectors.col(j).normalize();
  out.jordan_like = out.eigenvectors.partialPivLu().solve(a.cast<Complex>() * out.eigenvectors);
  return out;
}

bool spectral_gap_ok(const CVector& sorted, int r, double tol_gap) {
  const Index n = sorted.size();
  if (r < 1 || r > n - 1) return false;
  return sorted[r - 1].real() - sorted[r].real() > tol_gap;
}

CMatrix SchurData::triangular() const {
  const Index n = size();
  const Index r = split;
  CMatrix t = CMatrix::Zero(n, n);
  t.topLeftCorner(r, r) = block_11;
  t.topRightCorner(r, n - r) = block_12;
  t.bottomRightCorner(n - r, n - r) = block_22;
  return t;
}

SchurData ordered_schur(const Matrix& a, int r, double tol_gap) {
  require_square_finite(a, "ordered_schur");
  const Index n = a.rows();
  if (r < 1 || r > n) {
    std::ostringstream os;
    os << "ordered_schur: split " << r << " outside 1.." << n;
    throw ConfigError(os.str());
  }
  ComplexSchurForm form = sorted_complex_schur(a);
  const CVector diag = form.upper.diagonal();
  if (r < n && !spectral_gap_ok(diag, r, tol_gap)) {
    std::ostringstream os;
    os << "no spectral gap at r = " << r << ": lambda_" << r << " = "
       << format_complex(diag[r - 1]) << ", lambda_" << r + 1 << " = "
       << format_complex(diag[r]) << " (real-part gap "
       << diag[r - 1].real() - diag[r].real() << " <= " << tol_gap << ")";
    throw GapError(os.str(), r, diag[r - 1], diag[r]);
  }
  SchurData out;
  out.split = r;
  out.unitary = std::move(form.unitary);
  out.block_11 = form.upper.topLeftCorner(r, r);
  out.block_12 = form.upper.topRightCorner(r, n - r);
  out.block_22 = form.upper.bottomRightCorner(n - r, n - r);
  return out;
}

AttractionEstimate attraction_beta(const SchurData& schur) {
  AttractionEstimate est;
  const CMatrix h11 = schur.block_11 + schur.block_11.adjoint();
  Eigen::SelfAdjointEigenSolver<CMatrix> es11(h11, Eigen::EigenvaluesOnly);
  est.lambda_l1_r = es11.eigenvalues()(0);
  if (schur.block_22.size() > 0) {
    const CMatrix h22 = schur.block_22 + schur.block_22.adjoint();
    Eigen::SelfAdjointEigenSolver<CMatrix> es22(h22, Eigen::EigenvaluesOnly);
    est.lambda_l2_1 = es22.eigenvalues()(h22.rows() - 1);
  } else {
    est.lambda_l2_1 = -std::numeric_limits<double>::infinity();
  }
  if (schur.block_12.size() > 0) {
    Eigen::JacobiSVD<CMatrix> svd(schur.block_12);
    const double s = svd.singularValues()(0);
    est.ell_max = s * s;
  }
  est.gap_ok = est.lambda_l1_r > est.lambda_l2_1;
  if (est.gap_ok) {
    if (est.ell_max == 0.0 || std::isinf(est.lambda_l2_1)) {
      est.beta = 1.0;
    } else {
      const double d = est.lambda_l1_r - est.lambda_l2_1;
      est.beta = 1.0 / (1.0 + 4.0 * est.ell_max / (d * d));
    }
  }
  return est;
}

int count_unstable(const CVector& eigenvalues, double threshold) {
  int count = 0;
  for (Index i = 0; i < eigenvalues.size(); ++i)
    if (eigenvalues[i].real() >= threshold) ++count;
  return count;
}

std::vector<int> conjugate_partners(const CVector& sorted) {
  const Index n = sorted.size();
  std::vector<int> partner(n, -1);
  for (Index i = 0; i < n; ++i) {
    if (sorted[i].imag() <= 0.0 || partner[i] >= 0) continue;
    const Complex target = std::conj(sorted[i]);
    double best = std::numeric_limits<double>::infinity();
    Index best_j = -1;
    for (Index j = 0; j < n; ++j) {
      if (j == i || partner[j] >= 0 || sorted[j].imag() >= 0.0) continue;
      const double d = std::abs(sorted[j] - target);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best_j >= 0) {
      partner[i] = static_cast<int>(best_j);
      partner[best_j] = static_cast<int>(i);
    }
  }
  return partner;
}

namespace {

bool try_augment(Index u, const std::vector<std::vector<Index>>& adj, std::vector<Index>& match_right,
                 std::vector<bool>& seen) {
  for (Index v : adj[u]) {
    if (seen[v]) continue;
    seen[v] = true;
    if (match_right[v] < 0 || try_augment(match_right[v], adj, match_right, seen)) {
      match_right[v] = u;
      return true;
    }
  }
  return false;
}

bool perfect_matching_within(const Matrix& dist, double d) {
  const Index n = dist.rows();
  std::vector<std::vector<Index>> adj(n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (dist(i, j) <= d) adj[i].push_back(j);
  std::vector<Index> match_right(n, -1);
  for (Index i = 0; i < n; ++i) {
    std::vector<bool> seen(n, false);
    if (!try_augment(i, adj, match_right, seen)) return false;
  }
  return true;
}

}  // namespace

double multiset_distance(const CVector& a, const CVector& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  const Index n = a.size();
  if (n == 0) return 0.0;
  Matrix dist(n, n);
  std::vector<double> candidates;
  candidates.reserve(n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      dist(i, j) = std::abs(a[i] - b[j]);
      candidates.push_back(dist(i, j));
    }
  std::sort(candidates.begin(), candidates.end());
  std::size_t lo = 0, hi = candidates.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (perfect_matching_within(dist, candidates[mid])) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return candidates[lo];
}

}  // namespace lrkb
