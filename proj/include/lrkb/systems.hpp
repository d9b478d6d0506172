#pragma once

#include "lrkb/common.hpp"
#include "lrkb/stiefel.hpp"

namespace lrkb {

/// dx/dt = A x + G w,  y = C x + H v  with unit-intensity white noises w, v.
struct LtiSystem {
  Matrix a;  // n x n
  Matrix g;  // n x n
  Matrix c;  // p x n
  Matrix h;  // p x p

  Index n() const { return a.rows(); }
  Index p() const { return c.rows(); }

  /// HH^T.
  Matrix noise_intensity() const { return h * h.transpose(); }
  /// C^T (HH^T)^{-1} C, the information matrix of the observation.
  Matrix information() const;
  /// (HH^T)^{-1}.
  Matrix noise_precision() const;
};

/// Checks dims, finiteness and lambda_min(HH^T) > tol_pd.
/// Throws ShapeError or ValidationError; returns a copy on success.
LtiSystem validate(const LtiSystem& sys, double tol_pd = kTolPd);

/// rank [C; A - lambda I] = n for every eigenvalue of A.
bool pbh_observable(const Matrix& a, const Matrix& c, double tol_rank = kTolRank);
/// rank [G, A - lambda I] = n for every eigenvalue of A. G may be rectangular.
bool pbh_controllable(const Matrix& a, const Matrix& g, double tol_rank = kTolRank);

/// The rank-r triple (U^T A U, C U, U^T G) seen through a frame.
struct ReducedSystem {
  Matrix a_u;  // r x r
  Matrix c_u;  // p x r
  Matrix g_u;  // r x n
  StiefelFrame frame;
};

/// Throws FrameError when the frame is not orthonormal within tol_orth and
/// ShapeError on dimension mismatch.
ReducedSystem reduce(const LtiSystem& sys, const StiefelFrame& frame,
                     double tol_orth = kTolOrth);

/// Smallest rank r' >= min_rank for which the low-rank filter is stable:
/// the number of eigenvalues with Re >= threshold, raised until the split
/// falls in a real-part gap. Returns 0 for Hurwitz A when min_rank is 0.
/// Throws GapError when no admissible rank below n exists.
int minimal_rank(const LtiSystem& sys, int min_rank = 0, double threshold = 0.0,
                 double tol_gap = kTolGap);

}  // namespace lrkb
