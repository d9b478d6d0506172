#pragma once

#include "lrkb/common.hpp"

namespace lrkb {

/// Thin Q factor of `m` with the positive-diagonal R convention.
/// Throws ShapeError when `m` has more columns than rows.
Matrix orthonormalize(const Matrix& m);

/// ||U^T U - I||_F.
double orth_error(const Matrix& u);

inline Matrix symmetrize(const Matrix& p) { return 0.5 * (p + p.transpose()); }

double spectral_norm(const Matrix& m);
double min_symmetric_eigenvalue(const Matrix& p);
double max_symmetric_eigenvalue(const Matrix& p);

/// Solves A X + X B = C with a complex Schur (Bartels-Stewart) sweep.
/// Requires spec(A) and spec(-B) to be disjoint.
CMatrix solve_sylvester(const CMatrix& a, const CMatrix& b, const CMatrix& c);

/// Solves A X + X A^T + Q = 0 for real A and symmetric Q. Requires A Hurwitz-compatible
/// spectrum (no pair with lambda_i + lambda_j = 0).
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// Largest principal angle (radians) between the column spans of two
/// orthonormal matrices with the same number of columns.
double max_principal_angle(const Matrix& u, const Matrix& v);

/// Orthonormal basis of the orthogonal complement of span(u), u orthonormal.
Matrix orthogonal_complement(const Matrix& u);

bool all_finite(const Matrix& m);

}  // namespace lrkb
