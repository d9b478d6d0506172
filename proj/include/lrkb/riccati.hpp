#pragma once

#include <vector>

#include "lrkb/common.hpp"
#include "lrkb/stiefel.hpp"
#include "lrkb/systems.hpp"

namespace lrkb {

/// Covariance-like symmetric PSD matrix at a given time.
struct RiccatiState {
  Matrix matrix;
  double time = 0.0;
};

/// Coefficients of dP/dt = A P + P A^T + Q - P M P.
struct RiccatiTerms {
  Matrix drift;        // A
  Matrix forcing;      // Q = G G^T
  Matrix information;  // M = C^T (HH^T)^{-1} C

  static RiccatiTerms full(const LtiSystem& sys);
  /// Terms of the r-dimensional equation seen through a frame U:
  /// A_U = U^T A U, Q = G_U G_U^T, M = C_U^T (HH^T)^{-1} C_U.
  static RiccatiTerms reduced(const LtiSystem& sys, const StiefelFrame& frame);

  Matrix rhs(const Matrix& p) const;
  /// ||A P + P A^T + Q - P M P||_F.
  double residual(const Matrix& p) const { return rhs(p).norm(); }
};

/// One classical RK4 step followed by symmetrization.
Matrix riccati_rk4_step(const RiccatiTerms& terms, const Matrix& p, double h);

/// Fixed-step RK4 on [0, t_max] starting from p0.time, symmetrized every
/// step; every `record_stride`-th state and the final one are returned.
/// Throws DivergenceError on non-finite values.
std::vector<RiccatiState> propagate(const RiccatiTerms& terms, const RiccatiState& p0, double dt,
                                    double t_max, long record_stride = 1);

std::vector<RiccatiState> propagate_full(const LtiSystem& sys, const RiccatiState& p0, double dt,
                                         double t_max, long record_stride = 1);
std::vector<RiccatiState> propagate_reduced(const LtiSystem& sys, const StiefelFrame& frame,
                                            const RiccatiState& r0, double dt, double t_max,
                                            long record_stride = 1);

struct AreOptions {
  double tol_are = kTolAre;
  /// Newton-Kleinman polishing of the starting solution.
  bool newton_refine = true;
  /// Relative ARE residual at which the fallback ODE phase hands over to
  /// Newton even without a stabilizing margin.
  double ode_switch = 1e-6;
  long max_ode_steps = 200'000;
  int max_newton_iterations = 60;
  double tol_rank = kTolRank;
};

/// Stabilizing solution of A P + P A^T + Gk Gk^T - P Ck^T (HH^T)^{-1} Ck P = 0.
/// The start comes from the stable invariant subspace of the Hamiltonian
/// (ordered complex Schur form); if that basis is singular the Riccati ODE
/// is integrated from P = 0 until A - P M is Hurwitz. Newton-Kleinman
/// finishes in both cases. Throws StructuralError if the triple fails the PBH tests,
/// ConvergenceError if the residual target is missed.
Matrix solve_are(const Matrix& a, const Matrix& gk, const Matrix& ck, const Matrix& h,
                 const AreOptions& options = {});

/// Steady state of the low-rank filter for a frame at an Oja equilibrium.
struct LiftedSolution {
  StiefelFrame frame;
  Matrix reduced;                // R_U, r x r SPD
  Matrix lifted;                 // U R_U U^T, n x n
  CVector closed_loop_eigs;      // eig(A - lifted C^T (HH^T)^{-1} C), sorted
  CVector reduced_closed_loop;   // sigma_i = eig(A_U - R_U C_U^T (HH^T)^{-1} C_U)
  CVector retained_eigs;         // lambda_{r+1..n}(A)

  Matrix closed_loop_matrix(const LtiSystem& sys) const;
};

/// Throws EquilibriumError if residual(A, frame) > tol_conv and
/// StructuralError if the reduced triple is not controllable and observable.
LiftedSolution reduced_steady_state(const LtiSystem& sys, const StiefelFrame& frame,
                                    const AreOptions& options = {}, double tol_conv = kTolConv);

struct RankConditionReport {
  int unstable_count = 0;  // r'
  int rank = 0;
  bool rank_sufficient = false;  // r >= r'
  double max_closed_loop_re = 0.0;
  bool bounded = false;  // max_closed_loop_re < 0
  LiftedSolution solution;
};

/// Evaluates the closed loop at the stable equilibrium of rank r (1 <= r <= n).
RankConditionReport rank_condition_report(const LtiSystem& sys, int r,
                                          const AreOptions& options = {},
                                          double unstable_threshold = 0.0);

}  // namespace lrkb
