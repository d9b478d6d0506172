#pragma once

#include <optional>
#include <vector>

#include "lrkb/common.hpp"

namespace lrkb {

/// Strict order used everywhere eigenvalues are listed: non-increasing real
/// part, then non-increasing imaginary part. Conjugate pairs end up adjacent
/// with the positive-imaginary member first.
bool eigenvalue_precedes(Complex a, Complex b) noexcept;

/// Complex Schur form A = U T U^H with diag(T) in eigenvalue_precedes order.
///
/// The diagonal is cleaned before sorting: values with negligible imaginary
/// part become real and conjugate partners are made exact conjugates, so ties
/// in the real part are exact and the order is reproducible.
struct ComplexSchurForm {
  CMatrix unitary;
  CMatrix upper;
};

ComplexSchurForm sorted_complex_schur(const Matrix& a);

/// Reorders `form` in place so that the diagonal positions flagged in
/// `selected` come first, keeping relative order within both groups.
void move_selected_to_front(ComplexSchurForm& form, const std::vector<bool>& selected);

/// Eigenvalues only, same cleaning and order as sorted_complex_schur.
CVector sorted_eigenvalues(const Matrix& a);

using ExtMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

/// As sorted_eigenvalues, with the Schur iteration run in long double. Used
/// where a large feedback term makes the spectrum ill-conditioned.
CVector sorted_eigenvalues_extended(const ExtMatrix& a);

struct SpectralData {
  CVector eigenvalues;   // sorted, see eigenvalue_precedes
  CMatrix eigenvectors;  // Psi, unit-norm (generalized) eigenvectors
  CMatrix jordan_like;   // Psi^{-1} A Psi, block diagonal over clusters

  Index size() const { return eigenvalues.size(); }
};

/// Sorted eigensystem. Repeated eigenvalues are grouped into clusters whose
/// columns are Schur vectors of the cluster (generalized eigenvectors), so
/// defective matrices are handled without a Jordan decomposition.
/// Throws ConvergenceError if the Schur iteration fails.
SpectralData eigs_sorted(const Matrix& a);

/// Re(lambda_r) - Re(lambda_{r+1}) > tol_gap (r is 1-based). False outside
/// 1 <= r <= n-1.
bool spectral_gap_ok(const CVector& sorted, int r, double tol_gap = kTolGap);
inline bool spectral_gap_ok(const SpectralData& spec, int r, double tol_gap = kTolGap) {
  return spectral_gap_ok(spec.eigenvalues, r, tol_gap);
}

/// Ordered complex Schur factorization split after the r dominant eigenvalues:
/// S^H A S = [[L11, L12], [0, L22]].
struct SchurData {
  CMatrix unitary;   // S
  CMatrix block_11;  // r x r
  CMatrix block_12;  // r x (n - r)
  CMatrix block_22;  // (n - r) x (n - r)
  int split = 0;     // r

  Index size() const { return unitary.rows(); }
  CMatrix triangular() const;
  /// The r leading Schur vectors, spanning the dominant invariant subspace.
  CMatrix dominant_basis() const { return unitary.leftCols(split); }
};

/// 1 <= r <= n. For r < n throws GapError when the split falls in a zero gap.
SchurData ordered_schur(const Matrix& a, int r, double tol_gap = kTolGap);

/// Domain-of-attraction constant for the Oja flow.
struct AttractionEstimate {
  std::optional<double> beta;  // empty when gap_ok is false
  double ell_max = 0.0;        // lambda_max(L12^H L12)
  double lambda_l1_r = 0.0;    // smallest eigenvalue of L11 + L11^H
  double lambda_l2_1 = 0.0;    // largest eigenvalue of L22 + L22^H
  bool gap_ok = false;         // lambda_l1_r > lambda_l2_1
};

AttractionEstimate attraction_beta(const SchurData& schur);

/// Number of eigenvalues with Re(lambda) >= threshold.
int count_unstable(const CVector& eigenvalues, double threshold = 0.0);
inline int count_unstable(const SpectralData& spec, double threshold = 0.0) {
  return count_unstable(spec.eigenvalues, threshold);
}

/// Index of the conjugate partner of each eigenvalue in a sorted list, or -1
/// for real eigenvalues.
std::vector<int> conjugate_partners(const CVector& sorted);

/// Bottleneck distance between two multisets of complex numbers: the
/// smallest d such that a perfect matching with all |a_i - b_j| <= d exists.
/// Infinite when the sizes differ.
double multiset_distance(const CVector& a, const CVector& b);

}  // namespace lrkb
