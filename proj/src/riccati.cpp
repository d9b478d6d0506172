#include "lrkb/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "lrkb/spectral.hpp"

namespace lrkb {

namespace {

Matrix precision_of(const Matrix& h) {
  const Matrix r = h * h.transpose();
  Eigen::LLT<Matrix> llt(r);
  if (llt.info() != Eigen::Success)
    throw ValidationError("HH^T is not positive definite", min_symmetric_eigenvalue(r));
  return llt.solve(Matrix::Identity(r.rows(), r.cols()));
}

double max_real_part(const CVector& ev) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < ev.size(); ++i) m = std::max(m, ev[i].real());
  return m;
}

// A P + P A^T + Q - P M P accumulated in long double. When ||P|| is large the
// two quadratic-size terms nearly cancel and a double evaluation loses the
// digits a correction step needs.
Matrix residual_extended(const RiccatiTerms& terms, const Matrix& p) {
  const ExtMatrix a = terms.drift.cast<long double>();
  const ExtMatrix pe = p.cast<long double>();
  const ExtMatrix ap = a * pe;
  const ExtMatrix r = ap + ap.transpose() + terms.forcing.cast<long double>() -
                      pe * (terms.information.cast<long double>() * pe);
  return r.cast<double>();
}

// P = U2 U1^{-1} from the stable invariant subspace [U1; U2] of the
// Hamiltonian [[A^T, -M], [-Q, -A]]. Empty when the split is not k / k or
// the basis is too close to singular.
std::optional<Matrix> hamiltonian_solution(const RiccatiTerms& terms) {
  const Index k = terms.drift.rows();
  Matrix ham(2 * k, 2 * k);
  ham << terms.drift.transpose(), -terms.information, -terms.forcing, -terms.drift;
  if (!ham.allFinite()) return std::nullopt;
  ComplexSchurForm form = sorted_complex_schur(ham);
  std::vector<bool> stable(static_cast<std::size_t>(2 * k));
  Index count = 0;
  for (Index i = 0; i < 2 * k; ++i) {
    stable[static_cast<std::size_t>(i)] = form.upper(i, i).real() < 0.0;
    count += stable[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  if (count != k) return std::nullopt;
  move_selected_to_front(form, stable);
  const CMatrix u1 = form.unitary.topLeftCorner(k, k);
  const CMatrix u2 = form.unitary.bottomLeftCorner(k, k);
  const Eigen::FullPivLU<CMatrix> lu(u1);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) return std::nullopt;
  const Matrix p = symmetrize((u2 * lu.inverse()).real());
  if (!p.allFinite()) return std::nullopt;
  if (max_real_part(sorted_eigenvalues(terms.drift - p * terms.information)) >= 0.0)
    return std::nullopt;
  return p;
}

}  // namespace

RiccatiTerms RiccatiTerms::full(const LtiSystem& sys) {
  return RiccatiTerms{sys.a, sys.g * sys.g.transpose(), sys.information()};
}

RiccatiTerms RiccatiTerms::reduced(const LtiSystem& sys, const StiefelFrame& frame) {
  const ReducedSystem red = reduce(sys, frame);
  return RiccatiTerms{red.a_u, red.g_u * red.g_u.transpose(),
                      red.c_u.transpose() * sys.noise_precision() * red.c_u};
}

Matrix RiccatiTerms::rhs(const Matrix& p) const {
  Matrix ap = drift * p;
  Matrix out = ap + ap.transpose() + forcing;
  out.noalias() -= p * information * p;
  return out;
}

Matrix riccati_rk4_step(const RiccatiTerms& terms, const Matrix& p, double h) {
  const Matrix k1 = terms.rhs(p);
  const Matrix k2 = terms.rhs(p + 0.5 * h * k1);
  const Matrix k3 = terms.rhs(p + 0.5 * h * k2);
  const Matrix k4 = terms.rhs(p + h * k3);
  return symmetrize(p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

std::vector<RiccatiState> propagate(const RiccatiTerms& terms, const RiccatiState& p0, double dt,
                                    double t_max, long record_stride) {
  const Index k = terms.drift.rows();
  if (p0.matrix.rows() != k || p0.matrix.cols() != k)
    throw ShapeError("propagate: initial state has the wrong size");
  if (!(dt > 0.0)) throw ConfigError("propagate: dt must be positive");
  if (!(t_max >= 0.0)) throw ConfigError("propagate: t_max must be non-negative");
  if (record_stride < 1) record_stride = 1;
  const long steps = static_cast<long>(std::ceil(t_max / dt - 1e-9));
  std::vector<RiccatiState> out;
  out.reserve(static_cast<std::size_t>(steps / record_stride + 2));
  Matrix p = symmetrize(p0.matrix);
  out.push_back({p, p0.time});
  for (long step = 1; step <= steps; ++step) {
    const double h = (step == steps) ? t_max - dt * static_cast<double>(step - 1) : dt;
    p = riccati_rk4_step(terms, p, h);
    const double t = p0.time + dt * static_cast<double>(step - 1) + h;
    if (!p.allFinite()) throw DivergenceError("propagate: Riccati solution blew up", t);
    if (step % record_stride == 0 || step == steps) out.push_back({p, t});
  }
  return out;
}

std::vector<RiccatiState> propagate_full(const LtiSystem& sys, const RiccatiState& p0, double dt,
                                         double t_max, long record_stride) {
  return propagate(RiccatiTerms::full(sys), p0, dt, t_max, record_stride);
}

std::vector<RiccatiState> propagate_reduced(const LtiSystem& sys, const StiefelFrame& frame,
                                            const RiccatiState& r0, double dt, double t_max,
                                            long record_stride) {
  return propagate(RiccatiTerms::reduced(sys, frame), r0, dt, t_max, record_stride);
}

Matrix solve_are(const Matrix& a, const Matrix& gk, const Matrix& ck, const Matrix& h,
                 const AreOptions& options) {
  const Index k = a.rows();
  if (a.cols() != k || gk.rows() != k || ck.cols() != k || h.rows() != ck.rows() ||
      h.cols() != ck.rows())
    throw ShapeError("solve_are: dimension mismatch");
  if (!pbh_controllable(a, gk, options.tol_rank))
    throw StructuralError("solve_are: (A, G) fails the PBH controllability test");
  if (!pbh_observable(a, ck, options.tol_rank))
    throw StructuralError("solve_are: (C, A) fails the PBH observability test");

  const RiccatiTerms terms{a, gk * gk.transpose(), ck.transpose() * precision_of(h) * ck};
  auto scaled = [](const Matrix& p) { return 1.0 + p.squaredNorm(); };
  const double norm_a = a.norm();
  const double norm_m = terms.information.norm();

  long steps = 0;
  std::optional<Matrix> start = hamiltonian_solution(terms);
  Matrix p;
  double res = 0.0;
  if (start) {
    p = *start;
    res = terms.residual(p);
  } else {
    // Fallback: the Riccati flow from P = 0 converges to the stabilizing
    // solution. Newton-Kleinman converges from any stabilizing iterate, so
    // the flow only has to run until A - P M is Hurwitz with some margin.
    p = Matrix::Zero(k, k);
    const double ode_target = options.newton_refine ? options.ode_switch : options.tol_are;
    const double hand_over_margin = -1e-3 * (1.0 + norm_a);
    res = terms.residual(p);
    while (res > ode_target * scaled(p)) {
      if (options.newton_refine && steps % 32 == 0 &&
          max_real_part(sorted_eigenvalues(a - p * terms.information)) < hand_over_margin)
        break;
      if (steps >= options.max_ode_steps)
        throw ConvergenceError("solve_are: Riccati flow did not settle", steps, res);
      const double lipschitz = 2.0 * norm_a + 2.0 * norm_m * p.norm();
      const double h_step = 0.2 / std::max(lipschitz, 1e-12);
      p = riccati_rk4_step(terms, p, h_step);
      ++steps;
      if (!p.allFinite()) throw DivergenceError("solve_are: Riccati flow blew up", 0.0);
      res = terms.residual(p);
    }
  }

  // Phase 2: Newton-Kleinman, A_k X + X A_k^T + Q + P M P = 0.
  if (options.newton_refine) {
    double previous = res;
    for (int it = 0; it < options.max_newton_iterations; ++it) {
      const Matrix closed = a - p * terms.information;
      if (max_real_part(sorted_eigenvalues(closed)) >= 0.0)
        throw ConvergenceError("solve_are: Newton iterate is not stabilizing", it, res);
      const Matrix x = solve_lyapunov(closed, terms.forcing + p * terms.information * p);
      const double delta = (x - p).norm();
      p = x;
      res = terms.residual(p);
      if (delta <= 1e-15 * (1.0 + p.norm())) break;
      if (res >= previous && res <= options.tol_are * scaled(p)) break;
      previous = res;
    }
    // Defect correction: (A - P M) D + D (A - P M)^T + R(P) = 0 with the
    // residual in extended precision, repeated while the step shrinks.
    double last_step = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 4; ++it) {
      const Matrix closed = a - p * terms.information;
      const Matrix d = solve_lyapunov(closed, residual_extended(terms, p));
      const double step = d.norm();
      if (!d.allFinite() || !(step < 0.5 * last_step)) break;
      p = symmetrize(p + d);
      last_step = step;
      if (step <= 1e-17 * (1.0 + p.norm())) break;
    }
    res = terms.residual(p);
  }
  if (!(res <= options.tol_are * scaled(p))) {
    std::ostringstream os;
    os << "solve_are: residual " << res << " above target " << options.tol_are * scaled(p);
    throw ConvergenceError(os.str(), steps, res);
  }
  const double min_ev = min_symmetric_eigenvalue(p);
  if (!(min_ev > 0.0))
    throw ConvergenceError("solve_are: solution is not positive definite", steps, min_ev);
  return symmetrize(p);
}

Matrix LiftedSolution::closed_loop_matrix(const LtiSystem& sys) const {
  return sys.a - lifted * sys.information();
}

LiftedSolution reduced_steady_state(const LtiSystem& sys, const StiefelFrame& frame,
                                    const AreOptions& options, double tol_conv) {
  const double res = residual(sys.a, frame);
  if (!(res <= tol_conv)) {
    std::ostringstream os;
    os << "frame is not an Oja equilibrium: residual " << res << " > " << tol_conv;
    throw EquilibriumError(os.str(), res);
  }
  const ReducedSystem red = reduce(sys, frame);
  const Matrix precision = sys.noise_precision();
  if (!pbh_controllable(red.a_u, red.g_u, options.tol_rank) ||
      !pbh_observable(red.a_u, red.c_u, options.tol_rank))
    throw StructuralError(
        "reduced triple (A_U, G_U, C_U) is not controllable and observable; at a stable "
        "equilibrium this means the full triple is not either");
  const Matrix reduced = solve_are(red.a_u, red.g_u, red.c_u, sys.h, options);
  const Matrix& u = frame.matrix();
  const Index r = frame.rank();
  const Index n = sys.n();

  LiftedSolution sol{frame, reduced, symmetrize(u * reduced * u.transpose()), {}, {}, {}};
  // Both closed loops carry the feedback P M, which is large when the
  // reduced solution is, so their eigenvalues are formed and computed in
  // extended precision.
  const ExtMatrix u_ext = u.cast<long double>();
  const ExtMatrix p_ext = reduced.cast<long double>();
  const ExtMatrix m_ext = (sys.c.transpose() * precision * sys.c).cast<long double>();
  const ExtMatrix a_ext = sys.a.cast<long double>();
  sol.closed_loop_eigs =
      sorted_eigenvalues_extended(ExtMatrix(a_ext - u_ext * (p_ext * (u_ext.transpose() * m_ext))));
  sol.reduced_closed_loop = sorted_eigenvalues_extended(ExtMatrix(
      u_ext.transpose() * a_ext * u_ext - p_ext * (u_ext.transpose() * m_ext * u_ext)));
  sol.retained_eigs = sorted_eigenvalues(sys.a).tail(n - r);
  return sol;
}

RankConditionReport rank_condition_report(const LtiSystem& sys, int r, const AreOptions& options,
                                          double unstable_threshold) {
  const int n = static_cast<int>(sys.n());
  if (r < 1 || r > n) {
    std::ostringstream os;
    os << "rank_condition_report: rank " << r << " outside 1.." << n;
    throw ConfigError(os.str());
  }
  const int unstable = count_unstable(sorted_eigenvalues(sys.a), unstable_threshold);
  LiftedSolution sol = reduced_steady_state(sys, stable_equilibrium(sys.a, r), options);
  const double max_re = max_real_part(sol.closed_loop_eigs);
  return RankConditionReport{unstable, r, r >= unstable, max_re, max_re < 0.0, std::move(sol)};
}

}  // namespace lrkb
