#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lrkb/common.hpp"
#include "lrkb/riccati.hpp"
#include "lrkb/rng.hpp"
#include "lrkb/stiefel.hpp"
#include "lrkb/systems.hpp"

namespace lrkb {

/// Euler-Maruyama sample of the plant on the grid t_k = k dt.
/// observations[k] is the sample used to drive the filters over [t_k, t_k+1).
struct SimulationPath {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> observations;
  /// G sqrt(dt) xi_k and H eta_k / sqrt(dt). The filters use them to carry
  /// the estimation error directly, which stays accurate when the states
  /// grow large. Paths built without them fall back to estimate - state.
  std::vector<Vector> process_increments;
  std::vector<Vector> observation_noise;
  std::uint64_t seed = 0;
  double dt = 0.0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

/// Number of grid steps covering [0, t_max] with step dt. A horizon that is
/// not a whole number of steps is rounded up.
long grid_steps(double dt, double t_max);

/// x_{k+1} = x_k + A x_k dt + G sqrt(dt) xi_k,  y_k = C x_k + H eta_k / sqrt(dt).
/// Per step the stream yields xi_k (n values) then eta_k (p values).
/// The seeded overload uses NormalStream(seed, 0).
SimulationPath simulate_truth(const LtiSystem& sys, const Vector& x0, double dt_sim, double t_max,
                              std::uint64_t seed);
SimulationPath simulate_truth(const LtiSystem& sys, const Vector& x0, double dt_sim, double t_max,
                              NormalStream& rng);

struct FilterOptions {
  long record_stride = 1;
  /// Initial error covariance V(0) for the predicted error covariance of the
  /// low-rank filter. Defaults to the identity.
  std::optional<Matrix> initial_error_cov;
  /// Evolve the frame with the Oja flow alongside the filter instead of
  /// holding it fixed at an equilibrium.
  bool co_integrate_oja = false;
  double epsilon = 1.0;
  /// Reject frames whose Oja residual exceeds tol_conv (ignored when the
  /// frame is co-integrated).
  bool require_equilibrium = true;
  double tol_conv = kTolConv;
  /// trace(V) above growth_factor * trace(V(0)) raises the growth flag.
  double growth_factor = 1e6;
};

struct FilterRun {
  std::vector<double> times;
  std::vector<Vector> estimates;
  std::vector<Matrix> lifted_cov;      // U R U^T, or P for the full filter
  std::vector<Matrix> error_cov_pred;  // V(t), equal to P for the full filter
  std::vector<Vector> errors;          // estimate - truth
  std::vector<StiefelFrame> frames;    // only filled when the frame is co-integrated
  double max_trace = 0.0;              // sup over recorded times of trace(V)
  bool growth_flag = false;
};

/// Full Kalman-Bucy filter driven by the path's observations. The estimate
/// takes an Euler step with the gain at the start of the step; the Riccati
/// equation takes an RK4 step on the same grid.
FilterRun run_full_filter(const LtiSystem& sys, const SimulationPath& path, const Vector& xhat0,
                          const RiccatiState& p0, const FilterOptions& options = {});

/// Low-rank filter with covariance U R U^T. R follows the reduced Riccati
/// equation and V the closed-loop error covariance equation, both by RK4.
/// Throws EquilibriumError when the frame is not an Oja equilibrium (unless
/// co-integration is requested) and DivergenceError on non-finite values.
FilterRun run_lrkb_filter(const LtiSystem& sys, const SimulationPath& path,
                          const StiefelFrame& frame, const Vector& xtilde0, const Matrix& r0,
                          const FilterOptions& options = {});

/// dV/dt = (A - P M) V + V (A - P M)^T + G G^T + P M P along a schedule of
/// lifted covariances given on the grid t_k = k dt. RK4 with the schedule
/// interpolated linearly at midpoints; symmetrized every step.
std::vector<Matrix> propagate_error_cov(const LtiSystem& sys, const std::vector<Matrix>& schedule,
                                        const Matrix& v0, double dt);

struct MonteCarloConfig {
  double dt = 1e-3;
  double t_max = 8.0;
  int rank = 1;
  /// Mean of x(0), and the initial estimate of both filters. Defaults to 0.
  std::optional<Vector> x_mean;
  /// Covariance of x(0), the initial P and V. Defaults to the identity.
  std::optional<Matrix> initial_cov;
  /// Initial reduced covariance. Defaults to U^T initial_cov U.
  std::optional<Matrix> r0;
  /// Zero picks a stride giving at most about 1000 records.
  long record_stride = 0;
  double growth_factor = 1e6;
};

struct MonteCarloReport {
  std::size_t n_paths = 0;
  bool aggregated = false;
  std::vector<double> times;
  std::vector<Matrix> emp_full;  // E[e e^T] for the full filter
  std::vector<Matrix> emp_lrkb;  // E[e e^T] for the low-rank filter
  std::vector<Matrix> v_pred;    // V(t)
  std::vector<Matrix> p_hat;     // P(t) of the full filter
  /// max_ij |emp_lrkb - V|_ij / sqrt(V_ii V_jj) per record.
  std::vector<double> rel_dev;
  double max_rel_dev = 0.0;
  double tolerance = 0.0;  // 1.96 sqrt(2 / n_paths)
  bool growth_flag = false;
  /// Closed loop A - P_r M Hurwitz at the stable equilibrium.
  bool bounded = false;
  double max_closed_loop_re = 0.0;
  std::optional<Matrix> v_inf;  // steady V, only when bounded
  Matrix p_hat_s;               // full ARE solution
  /// trace(V_inf) >= trace(P_s) - 1e-8 (true when unbounded).
  bool optimality_ok = true;
};

/// Path i draws from NormalStream(seed, i): x(0) first, then per step xi and
/// eta as in simulate_truth. Paths run in fixed chunks whose partial sums are
/// reduced in chunk order, so the report does not depend on the thread count.
MonteCarloReport monte_carlo(const LtiSystem& sys, const MonteCarloConfig& config,
                             std::size_t n_paths, std::uint64_t seed, unsigned threads = 0);

/// Square root factor L with L L^T = cov (Cholesky, with an eigenvalue
/// fallback for semidefinite input).
Matrix covariance_factor(const Matrix& cov);

}  // namespace lrkb
