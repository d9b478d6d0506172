#include "lrkb/oja_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"

namespace lrkb {

namespace {

void require_square(const Matrix& a, const char* where) {
  if (a.rows() != a.cols()) throw ShapeError(std::string(where) + ": A must be square");
}

bool next_combination(std::vector<int>& c, int n) {
  const int k = static_cast<int>(c.size());
  int i = k - 1;
  while (i >= 0 && c[i] == n - k + i) --i;
  if (i < 0) return false;
  ++c[i];
  for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
  return true;
}

bool conjugation_closed(const std::vector<int>& selection, const std::vector<int>& partner) {
  for (int i : selection) {
    const int p = partner[i];
    if (p >= 0 && !std::binary_search(selection.begin(), selection.end(), p)) return false;
  }
  return true;
}

StabilityVerdict classify(const std::vector<int>& selection, const CVector& ev, double tol_gap) {
  const Index n = ev.size();
  std::vector<bool> kept(n, false);
  for (int i : selection) {
    if (i < 0 || i >= n) throw ConfigError("classify_stability: selection index out of range");
    kept[i] = true;
  }
  double min_retained = std::numeric_limits<double>::infinity();
  double max_discarded = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    if (kept[i]) {
      min_retained = std::min(min_retained, ev[i].real());
    } else {
      max_discarded = std::max(max_discarded, ev[i].real());
    }
  }
  StabilityVerdict v;
  for (Index i = 0; i < n && !v.degenerate; ++i) {
    if (!kept[i]) continue;
    for (Index j = 0; j < n; ++j) {
      if (!kept[j] && std::abs(ev[i].real() - ev[j].real()) <= tol_gap) {
        v.degenerate = true;
        break;
      }
    }
  }
  v.linearization_rate = max_discarded - min_retained;
  v.is_stable = v.linearization_rate < 0.0 && !v.degenerate;
  return v;
}

}  // namespace

Matrix oja_vector_field(const Matrix& a, const Matrix& u, double epsilon) {
  const Matrix au = a * u;
  Matrix out = au;
  out.noalias() -= u * (u.transpose() * au);
  if (epsilon != 1.0) out /= epsilon;
  return out;
}

double residual(const Matrix& a, const StiefelFrame& u) {
  require_square(a, "residual");
  if (u.ambient_dim() != a.rows()) throw ShapeError("residual: frame and A dimensions differ");
  return oja_vector_field(a, u.matrix()).norm();
}

OjaTrajectory integrate(const Matrix& a, const StiefelFrame& u0, const OjaOptions& options) {
  require_square(a, "integrate");
  const Index n = a.rows();
  const Index r = u0.rank();
  if (u0.ambient_dim() != n) throw ShapeError("integrate: frame and A dimensions differ");
  if (!a.allFinite()) throw ShapeError("integrate: A has non-finite entries");
  const double eps = options.epsilon;
  if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("integrate: epsilon must lie in (0, 1]");

  const double norm2 = spectral_norm(a);
  const double dt = options.dt.value_or(norm2 > 0.0 ? 0.05 * eps / norm2 : 0.05 * eps);
  if (!(dt > 0.0)) throw ConfigError("integrate: dt must be positive");
  if (dt * norm2 / eps > 0.1 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "integrate: step guard violated, dt ||A||_2 / epsilon = " << dt * norm2 / eps
       << " > 0.1";
    throw ConfigError(os.str());
  }

  double t_max = 0.0;
  if (options.t_max) {
    t_max = *options.t_max;
  } else if (r < n) {
    const CVector ev = sorted_eigenvalues(a);
    const double gap = ev[r - 1].real() - ev[r].real();
    if (!(gap > kTolGap))
      throw ConfigError("integrate: no spectral gap at r, t_max must be given explicitly");
    t_max = 200.0 / gap;
  }
  if (!(t_max >= 0.0)) throw ConfigError("integrate: t_max must be non-negative");

  const long max_steps = static_cast<long>(std::ceil(t_max / dt - 1e-9));
  const long stride =
      options.record_stride > 0 ? options.record_stride : std::max(1L, max_steps / 2000);

  OjaTrajectory traj;
  traj.dt = dt;
  Matrix u = u0.matrix();
  Matrix field = oja_vector_field(a, u, eps);
  double res = field.norm() * eps;
  auto record = [&](double t) {
    traj.times.push_back(t);
    traj.frames.emplace_back(u, std::numeric_limits<double>::infinity());
    traj.residuals.push_back(res);
    traj.orth_errors.push_back(orth_error(u));
  };
  record(0.0);
  if (options.stop_on_convergence && res < options.tol_conv) {
    traj.converged = true;
    return traj;
  }

  Matrix k2, k3, k4, stage;
  double t = 0.0;
  for (long step = 1; step <= max_steps; ++step) {
    const double h = (step == max_steps) ? t_max - dt * static_cast<double>(step - 1) : dt;
    const Matrix& k1 = field;
    stage = u + 0.5 * h * k1;
    k2 = oja_vector_field(a, stage, eps);
    stage = u + 0.5 * h * k2;
    k3 = oja_vector_field(a, stage, eps);
    stage = u + h * k3;
    k4 = oja_vector_field(a, stage, eps);
    stage = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = dt * static_cast<double>(step - 1) + h;
    if (!stage.allFinite()) throw DivergenceError("integrate: non-finite frame", t);
    u = orthonormalize(stage);
    const double oerr = orth_error(u);
    if (!(oerr <= options.tol_orth)) {
      std::ostringstream os;
      os << "integrate: orthonormality lost at t = " << t << " (" << oerr << ")";
      throw DivergenceError(os.str(), t);
    }
    field = oja_vector_field(a, u, eps);
    res = field.norm() * eps;
    traj.steps = step;
    const bool done = options.stop_on_convergence && res < options.tol_conv;
    if (done || step == max_steps || step % stride == 0) record(t);
    if (done) {
      traj.converged = true;
      return traj;
    }
  }
  traj.converged = traj.residuals.back() < options.tol_conv;
  return traj;
}

Matrix real_basis(const CMatrix& basis) {
  const Index n = basis.rows();
  const Index r = basis.cols();
  Eigen::HouseholderQR<CMatrix> qr(basis);
  const CMatrix q = qr.householderQ() * CMatrix::Identity(n, r);
  const CMatrix projector = q * q.adjoint();
  const double imag = projector.imag().cwiseAbs().maxCoeff();
  if (imag > 1e-8) {
    std::ostringstream os;
    os << "subspace is not closed under conjugation (|Im P| = " << imag
       << "); the split separates a complex-conjugate pair";
    throw GapError(os.str(), static_cast<int>(r), Complex(), Complex());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(projector.real()));
  return orthonormalize(es.eigenvectors().rightCols(r));
}

StiefelFrame stable_equilibrium(const Matrix& a, int r, double tol_gap) {
  require_square(a, "stable_equilibrium");
  const Index n = a.rows();
  if (r == n) return StiefelFrame(Matrix::Identity(n, n));
  const SchurData schur = ordered_schur(a, r, tol_gap);
  return StiefelFrame(real_basis(schur.dominant_basis()));
}

EquilibriumEnumeration enumerate_equilibria(const Matrix& a, int r, std::size_t limit,
                                            double tol_gap) {
  require_square(a, "enumerate_equilibria");
  const int n = static_cast<int>(a.rows());
  if (r < 1 || r > n) throw ConfigError("enumerate_equilibria: need 1 <= r <= n");
  const ComplexSchurForm form = sorted_complex_schur(a);
  const CVector ev = form.upper.diagonal();
  const std::vector<int> partner = conjugate_partners(ev);

  EquilibriumEnumeration out;
  std::vector<int> selection(r);
  for (int i = 0; i < r; ++i) selection[i] = i;
  do {
    if (!conjugation_closed(selection, partner)) continue;
    if (out.families.size() >= limit) {
      out.truncated = true;
      break;
    }
    ComplexSchurForm reordered = form;
    std::vector<bool> mask(n, false);
    for (int i : selection) mask[i] = true;
    move_selected_to_front(reordered, mask);
    const StabilityVerdict verdict = classify(selection, ev, tol_gap);
    out.families.push_back(EquilibriumFamily{
        selection, StiefelFrame(real_basis(reordered.unitary.leftCols(r))), verdict.is_stable,
        verdict.linearization_rate, verdict.degenerate});
  } while (next_combination(selection, n));
  return out;
}

StabilityVerdict classify_stability(const std::vector<int>& selection, const SpectralData& spec,
                                    double tol_gap) {
  return classify(selection, spec.eigenvalues, tol_gap);
}

double discarded_component(const SchurData& schur, const StiefelFrame& u0) {
  const Index n = schur.size();
  const Index r = schur.split;
  if (u0.ambient_dim() != n || u0.rank() != r)
    throw ShapeError("in_attraction_domain: frame shape differs from the Schur split");
  if (r == n) return 0.0;
  const CMatrix f = schur.unitary.adjoint() * u0.matrix().cast<Complex>();
  Eigen::JacobiSVD<CMatrix> svd(f.bottomRows(n - r));
  const double s = svd.singularValues()(0);
  return s * s;
}

AttractionCheck in_attraction_domain(const SchurData& schur, const AttractionEstimate& est,
                                     const StiefelFrame& u0) {
  if (!est.gap_ok || !est.beta) {
    std::ostringstream os;
    os << "attraction domain undefined: lambda_r(L11 + L11^H) = " << est.lambda_l1_r
       << " does not exceed lambda_1(L22 + L22^H) = " << est.lambda_l2_1;
    throw GapError(os.str(), schur.split, Complex(est.lambda_l1_r), Complex(est.lambda_l2_1));
  }
  AttractionCheck check;
  check.lambda_max_f2 = discarded_component(schur, u0);
  check.margin = *est.beta - check.lambda_max_f2;
  check.inside = check.lambda_max_f2 < *est.beta;
  return check;
}

}  // namespace lrkb
