#pragma once

#include "lrkb/common.hpp"
#include "lrkb/rng.hpp"
#include "lrkb/stiefel.hpp"
#include "lrkb/systems.hpp"

namespace lrkb {

/// Spectrum layout for random_gapped_matrix. Dominant real parts lie in
/// [gap/2, spread] and discarded ones in [-spread, -gap/2] before a common
/// shift drawn from [-shift, shift], so Re lambda_r - Re lambda_{r+1} >= gap.
struct SpectrumOptions {
  double gap = 0.2;
  double spread = 2.0;
  double shift = 1.0;
  /// Chance that a free pair of slots inside one group becomes a complex pair.
  double complex_fraction = 0.3;
  /// Strength of the strictly block-upper-triangular part (scaled by 1/sqrt(n)).
  double non_normality = 0.5;
  bool symmetric = false;
};

/// A = Q (D + kappa N) Q^T with D real block diagonal (1x1 and 2x2 rotation
/// blocks), N strictly block upper triangular and Q Haar orthogonal. The
/// spectrum is exactly that of D. Requires 1 <= r <= n; r = n puts every
/// eigenvalue in the dominant group.
Matrix random_gapped_matrix(Index n, int r, NormalStream& rng, const SpectrumOptions& options = {});

/// Random (G, C, H) for a given A, redrawn until the pair tests pass.
/// p = 0 draws the output dimension from {q, q+1, q+2} with q = ceil(n/4),
/// capped at n. Far more modes per output than that makes the observability
/// so poorly conditioned that the steady covariance becomes astronomically large.
/// H = N/2 + sqrt(p) I keeps HH^T well conditioned.
/// Throws StructuralError after max_attempts failures.
LtiSystem random_system(const Matrix& a, NormalStream& rng, Index p = 0, int max_attempts = 200);

/// A frame U0 whose span has discarded component exactly `target`, that is
/// lambda_max(F2^H F2) = target with F = S^H U0, for the real orthonormal
/// basis `dominant` of the leading Schur subspace. The direction of the
/// tilt and a final rotation inside the span are random. Requires
/// 0 <= target < 1 and r < n.
StiefelFrame tilted_frame(const StiefelFrame& dominant, double target, NormalStream& rng);

/// Haar orthogonal k x k matrix.
Matrix random_orthogonal(Index k, NormalStream& rng);

}  // namespace lrkb
