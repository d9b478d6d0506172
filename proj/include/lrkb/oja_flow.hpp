#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lrkb/common.hpp"
#include "lrkb/spectral.hpp"
#include "lrkb/stiefel.hpp"

namespace lrkb {

/// ||(I - U U^T) A U||_F, the magnitude of the Oja vector field at U.
double residual(const Matrix& a, const StiefelFrame& u);

/// Right-hand side (I - U U^T) A U / epsilon of the Oja flow.
Matrix oja_vector_field(const Matrix& a, const Matrix& u, double epsilon = 1.0);

struct OjaOptions {
  double epsilon = 1.0;
  /// Defaults to 0.05 * epsilon / ||A||_2.
  std::optional<double> dt;
  /// Defaults to 200 / (Re lambda_r - Re lambda_{r+1}); required when A has
  /// no gap at r.
  std::optional<double> t_max;
  double tol_conv = kTolConv;
  double tol_orth = kTolOrth;
  bool stop_on_convergence = true;
  /// Store every k-th step (the initial and final frames are always kept).
  /// Zero picks a stride giving at most about 2000 records.
  long record_stride = 0;
};

/// Sampled solution of epsilon dU/dt = (I - U U^T) A U.
struct OjaTrajectory {
  std::vector<double> times;
  std::vector<StiefelFrame> frames;
  std::vector<double> residuals;
  std::vector<double> orth_errors;
  bool converged = false;
  long steps = 0;
  double dt = 0.0;

  const StiefelFrame& final() const { return frames.back(); }
  double final_time() const { return times.back(); }
  double final_residual() const { return residuals.back(); }
};

/// Fixed-step RK4 with a QR retraction after every step. Stops once the
/// residual drops below tol_conv (if stop_on_convergence) or at t_max.
/// Throws ConfigError when dt ||A||_2 / epsilon > 0.1 or epsilon is outside
/// (0, 1], and DivergenceError on non-finite values or loss of
/// orthonormality.
OjaTrajectory integrate(const Matrix& a, const StiefelFrame& u0, const OjaOptions& options = {});

/// Real orthonormal basis of the invariant subspace of the r eigenvalues with
/// largest real part, taken from the ordered Schur form. For r = n returns
/// the identity. Throws GapError when there is no gap at r.
StiefelFrame stable_equilibrium(const Matrix& a, int r, double tol_gap = kTolGap);

/// Real orthonormal basis spanning the column space of a complex basis of a
/// conjugation-closed subspace. Throws GapError if the span is not closed
/// under conjugation.
Matrix real_basis(const CMatrix& basis);

/// One equilibrium set U_P of the Oja flow: frames spanning the invariant
/// subspace of a conjugation-closed selection of eigenvalues.
struct EquilibriumFamily {
  std::vector<int> selection;  // 0-based indices into eigs_sorted(A), ascending
  StiefelFrame representative;
  bool is_stable = false;
  double linearization_rate = 0.0;
  /// Some retained eigenvalue shares its real part with a discarded one.
  bool degenerate = false;
};

struct EquilibriumEnumeration {
  std::vector<EquilibriumFamily> families;
  bool truncated = false;
};

/// All conjugation-closed r-subsets of the spectrum in lexicographic order,
/// capped at `limit` families.
EquilibriumEnumeration enumerate_equilibria(const Matrix& a, int r, std::size_t limit = 256,
                                            double tol_gap = kTolGap);

struct StabilityVerdict {
  bool is_stable = false;
  /// max Re(discarded) - min Re(retained): the largest real part of the
  /// linearized normal dynamics.
  double linearization_rate = 0.0;
  bool degenerate = false;
};

/// Every discarded eigenvalue must have strictly smaller real part than every
/// retained one. Degenerate selections are never stable.
StabilityVerdict classify_stability(const std::vector<int>& selection, const SpectralData& spec,
                                    double tol_gap = kTolGap);
inline StabilityVerdict classify_stability(const EquilibriumFamily& family,
                                           const SpectralData& spec, double tol_gap = kTolGap) {
  return classify_stability(family.selection, spec, tol_gap);
}

struct AttractionCheck {
  bool inside = false;
  double lambda_max_f2 = 0.0;  // lambda_max(F2^H F2), F = S^H U0
  double margin = 0.0;         // beta - lambda_max_f2
};

/// Membership of U0 in V_beta. Throws GapError when est.gap_ok is false.
AttractionCheck in_attraction_domain(const SchurData& schur, const AttractionEstimate& est,
                                     const StiefelFrame& u0);

/// lambda_max(F2^H F2) alone.
double discarded_component(const SchurData& schur, const StiefelFrame& u0);

}  // namespace lrkb
