#include "lrkb/filter_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "lrkb/spectral.hpp"

namespace lrkb {

namespace {

constexpr std::size_t kChunkPaths = 256;

void check_path(const LtiSystem& sys, const SimulationPath& path) {
  if (path.times.empty() || path.states.size() != path.times.size() ||
      path.observations.size() != path.times.size())
    throw ShapeError("simulation path has inconsistent lengths");
  if (path.states.front().size() != sys.n() || path.observations.front().size() != sys.p())
    throw ShapeError("simulation path dimensions differ from the system");
  if (!(path.dt > 0.0)) throw ShapeError("simulation path has no time step");
}

double growth_threshold(const Matrix& v0, double factor) {
  const double t0 = v0.trace();
  return factor * (t0 > 0.0 ? t0 : 1.0);
}

bool is_record(long k, long steps, long stride) { return k % stride == 0 || k == steps; }

bool has_noise(const SimulationPath& path) {
  return path.process_increments.size() + 1 == path.times.size() &&
         path.observation_noise.size() == path.times.size();
}

// e_{k+1} = e_k + dt (A e_k - K (C e_k - v_k)) - w_k, the same recursion as
// estimate minus state without the cancellation.
void advance_error(Vector& e, const LtiSystem& sys, const Matrix& gain, const SimulationPath& path,
                   std::size_t k) {
  e += path.dt * (sys.a * e - gain * (sys.c * e - path.observation_noise[k])) -
       path.process_increments[k];
}

// Joint state of the low-rank filter's deterministic part: frame, reduced
// covariance and predicted error covariance.
struct LowRankState {
  Matrix u;
  Matrix r;
  Matrix v;
};

class LowRankDynamics {
 public:
  LowRankDynamics(const LtiSystem& sys, bool move_frame, double epsilon)
      : a_(sys.a),
        q_(sys.g * sys.g.transpose()),
        m_(sys.information()),
        move_frame_(move_frame),
        epsilon_(epsilon) {}

  const Matrix& information() const { return m_; }

  LowRankState rhs(const LowRankState& s) const {
    LowRankState d;
    const Matrix ut = s.u.transpose();
    const Matrix a_u = ut * a_ * s.u;
    const Matrix q_u = ut * q_ * s.u;
    const Matrix m_u = ut * m_ * s.u;
    const Matrix ar = a_u * s.r;
    d.r = ar + ar.transpose() + q_u - s.r * m_u * s.r;
    const Matrix lifted = s.u * s.r * ut;
    const Matrix closed = a_ - lifted * m_;
    const Matrix cv = closed * s.v;
    d.v = cv + cv.transpose() + q_ + lifted * m_ * lifted;
    d.u = move_frame_ ? oja_vector_field(a_, s.u, epsilon_) : Matrix::Zero(s.u.rows(), s.u.cols());
    return d;
  }

  LowRankState step(const LowRankState& s, double h) const {
    auto axpy = [](const LowRankState& x, double c, const LowRankState& d) {
      return LowRankState{x.u + c * d.u, x.r + c * d.r, x.v + c * d.v};
    };
    const LowRankState k1 = rhs(s);
    const LowRankState k2 = rhs(axpy(s, 0.5 * h, k1));
    const LowRankState k3 = rhs(axpy(s, 0.5 * h, k2));
    const LowRankState k4 = rhs(axpy(s, h, k3));
    const double w = h / 6.0;
    LowRankState out;
    out.r = symmetrize(s.r + w * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r));
    out.v = symmetrize(s.v + w * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v));
    out.u = move_frame_ ? orthonormalize(s.u + w * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u)) : s.u;
    return out;
  }

 private:
  Matrix a_;
  Matrix q_;
  Matrix m_;
  bool move_frame_;
  double epsilon_;
};

Matrix lifted_of(const LowRankState& s) { return s.u * s.r * s.u.transpose(); }

// Row-major copy for the hand-written Monte Carlo kernels.
std::vector<double> row_major(const Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return out;
}

// out = m x for a row-major rows x cols matrix.
inline void matvec(const double* m, const double* x, double* out, Index rows, Index cols) {
  for (Index i = 0; i < rows; ++i) {
    double s = 0.0;
    const double* row = m + i * cols;
    for (Index j = 0; j < cols; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

}  // namespace

long grid_steps(double dt, double t_max) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (!(t_max >= 0.0)) throw ConfigError("horizon must be non-negative");
  const double ratio = t_max / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) return static_cast<long>(nearest);
  return static_cast<long>(std::ceil(ratio));
}

Matrix covariance_factor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw ShapeError("covariance must be square");
  const Matrix s = symmetrize(cov);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const double min_ev = es.eigenvalues().minCoeff();
  if (min_ev < -kTolPsd * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
    throw ValidationError("covariance is not positive semidefinite", min_ev);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

SimulationPath simulate_truth(const LtiSystem& sys, const Vector& x0, double dt_sim, double t_max,
                              std::uint64_t seed) {
  NormalStream rng(seed, 0);
  return simulate_truth(sys, x0, dt_sim, t_max, rng);
}

SimulationPath simulate_truth(const LtiSystem& sys, const Vector& x0, double dt_sim, double t_max,
                              NormalStream& rng) {
  const Index n = sys.n();
  const Index p = sys.p();
  if (x0.size() != n) throw ShapeError("simulate_truth: x0 has the wrong length");
  const long steps = grid_steps(dt_sim, t_max);
  const double sq = std::sqrt(dt_sim);
  const Matrix g_scaled = sq * sys.g;
  const Matrix h_scaled = sys.h / sq;

  SimulationPath path;
  path.seed = rng.seed();
  path.dt = dt_sim;
  path.times.reserve(static_cast<std::size_t>(steps + 1));
  path.states.reserve(static_cast<std::size_t>(steps + 1));
  path.observations.reserve(static_cast<std::size_t>(steps + 1));
  path.process_increments.reserve(static_cast<std::size_t>(steps));
  path.observation_noise.reserve(static_cast<std::size_t>(steps + 1));
  Vector x = x0;
  Vector xi(n), eta(p);
  for (long k = 0; k <= steps; ++k) {
    rng.fill(xi);
    rng.fill(eta);
    path.times.push_back(dt_sim * static_cast<double>(k));
    path.states.push_back(x);
    path.observation_noise.push_back(h_scaled * eta);
    path.observations.push_back(sys.c * x + path.observation_noise.back());
    if (k < steps) {
      path.process_increments.push_back(g_scaled * xi);
      x += dt_sim * (sys.a * x) + path.process_increments.back();
    }
  }
  return path;
}

FilterRun run_full_filter(const LtiSystem& sys, const SimulationPath& path, const Vector& xhat0,
                          const RiccatiState& p0, const FilterOptions& options) {
  check_path(sys, path);
  const Index n = sys.n();
  if (xhat0.size() != n) throw ShapeError("run_full_filter: initial estimate has the wrong length");
  if (p0.matrix.rows() != n || p0.matrix.cols() != n)
    throw ShapeError("run_full_filter: initial covariance has the wrong size");
  const RiccatiTerms terms = RiccatiTerms::full(sys);
  const Matrix ct_prec = sys.c.transpose() * sys.noise_precision();
  const long steps = static_cast<long>(path.steps());
  const long stride = std::max(1L, options.record_stride);
  const double dt = path.dt;
  const double threshold = growth_threshold(p0.matrix, options.growth_factor);

  FilterRun run;
  Vector x = xhat0;
  const bool direct = has_noise(path);
  Vector e = xhat0 - path.states.front();
  Matrix p = symmetrize(p0.matrix);
  for (long k = 0; k <= steps; ++k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    if (is_record(k, steps, stride)) {
      run.times.push_back(path.times[ks]);
      run.estimates.push_back(x);
      run.lifted_cov.push_back(p);
      run.error_cov_pred.push_back(p);
      run.errors.push_back(direct ? e : Vector(x - path.states[ks]));
      run.max_trace = std::max(run.max_trace, p.trace());
    }
    if (k == steps) break;
    const Matrix gain = p * ct_prec;
    x += dt * (sys.a * x + gain * (path.observations[ks] - sys.c * x));
    if (direct) advance_error(e, sys, gain, path, ks);
    p = riccati_rk4_step(terms, p, dt);
    if (!x.allFinite() || !p.allFinite())
      throw DivergenceError("run_full_filter: non-finite state", path.times[ks] + dt);
  }
  run.growth_flag = run.max_trace > threshold;
  return run;
}

FilterRun run_lrkb_filter(const LtiSystem& sys, const SimulationPath& path,
                          const StiefelFrame& frame, const Vector& xtilde0, const Matrix& r0,
                          const FilterOptions& options) {
  check_path(sys, path);
  const Index n = sys.n();
  const Index r = frame.rank();
  if (frame.ambient_dim() != n) throw ShapeError("run_lrkb_filter: frame dimension differs");
  if (xtilde0.size() != n) throw ShapeError("run_lrkb_filter: initial estimate has the wrong length");
  if (r0.rows() != r || r0.cols() != r)
    throw ShapeError("run_lrkb_filter: initial reduced covariance must be r x r");
  if (options.co_integrate_oja && !(options.epsilon > 0.0 && options.epsilon <= 1.0))
    throw ConfigError("run_lrkb_filter: epsilon must lie in (0, 1]");
  if (!options.co_integrate_oja && options.require_equilibrium) {
    const double res = residual(sys.a, frame);
    if (!(res <= options.tol_conv)) {
      std::ostringstream os;
      os << "run_lrkb_filter: frame is not an Oja equilibrium (residual " << res << ")";
      throw EquilibriumError(os.str(), res);
    }
  }
  const Matrix v0 = options.initial_error_cov.value_or(Matrix::Identity(n, n));
  if (v0.rows() != n || v0.cols() != n)
    throw ShapeError("run_lrkb_filter: initial error covariance must be n x n");

  const LowRankDynamics dyn(sys, options.co_integrate_oja, options.epsilon);
  const Matrix ct_prec = sys.c.transpose() * sys.noise_precision();
  const long steps = static_cast<long>(path.steps());
  const long stride = std::max(1L, options.record_stride);
  const double dt = path.dt;
  const double threshold = growth_threshold(v0, options.growth_factor);

  FilterRun run;
  Vector x = xtilde0;
  const bool direct = has_noise(path);
  Vector e = xtilde0 - path.states.front();
  LowRankState s{frame.matrix(), symmetrize(r0), symmetrize(v0)};
  for (long k = 0; k <= steps; ++k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    const Matrix lifted = lifted_of(s);
    if (is_record(k, steps, stride)) {
      run.times.push_back(path.times[ks]);
      run.estimates.push_back(x);
      run.lifted_cov.push_back(lifted);
      run.error_cov_pred.push_back(s.v);
      run.errors.push_back(direct ? e : Vector(x - path.states[ks]));
      if (options.co_integrate_oja) run.frames.emplace_back(s.u);
      run.max_trace = std::max(run.max_trace, s.v.trace());
    }
    if (k == steps) break;
    const Matrix gain = lifted * ct_prec;
    x += dt * (sys.a * x + gain * (path.observations[ks] - sys.c * x));
    if (direct) advance_error(e, sys, gain, path, ks);
    s = dyn.step(s, dt);
    if (!x.allFinite() || !s.r.allFinite() || !s.v.allFinite())
      throw DivergenceError("run_lrkb_filter: non-finite state", path.times[ks] + dt);
  }
  run.growth_flag = run.max_trace > threshold;
  return run;
}

std::vector<Matrix> propagate_error_cov(const LtiSystem& sys, const std::vector<Matrix>& schedule,
                                        const Matrix& v0, double dt) {
  const Index n = sys.n();
  if (schedule.empty()) throw ShapeError("propagate_error_cov: empty schedule");
  if (v0.rows() != n || v0.cols() != n)
    throw ShapeError("propagate_error_cov: V0 must be n x n");
  if (!(dt > 0.0)) throw ConfigError("propagate_error_cov: dt must be positive");
  for (const Matrix& m : schedule)
    if (m.rows() != n || m.cols() != n)
      throw ShapeError("propagate_error_cov: schedule entries must be n x n");
  const Matrix q = sys.g * sys.g.transpose();
  const Matrix info = sys.information();
  auto rhs = [&](const Matrix& p, const Matrix& v) {
    const Matrix cv = (sys.a - p * info) * v;
    return Matrix(cv + cv.transpose() + q + p * info * p);
  };

  std::vector<Matrix> out;
  out.reserve(schedule.size());
  Matrix v = symmetrize(v0);
  out.push_back(v);
  for (std::size_t k = 0; k + 1 < schedule.size(); ++k) {
    const Matrix& p0 = schedule[k];
    const Matrix& p1 = schedule[k + 1];
    const Matrix pm = 0.5 * (p0 + p1);
    const Matrix k1 = rhs(p0, v);
    const Matrix k2 = rhs(pm, v + 0.5 * dt * k1);
    const Matrix k3 = rhs(pm, v + 0.5 * dt * k2);
    const Matrix k4 = rhs(p1, v + dt * k3);
    v = symmetrize(v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!v.allFinite())
      throw DivergenceError("propagate_error_cov: non-finite covariance",
                            dt * static_cast<double>(k + 1));
    out.push_back(v);
  }
  return out;
}

MonteCarloReport monte_carlo(const LtiSystem& sys, const MonteCarloConfig& config,
                             std::size_t n_paths, std::uint64_t seed, unsigned threads) {
  const Index n = sys.n();
  const Index p = sys.p();
  if (n_paths == 0) throw ConfigError("monte_carlo: n_paths must be positive");
  if (config.rank < 1 || config.rank > n) throw ConfigError("monte_carlo: rank outside 1..n");
  const long steps = grid_steps(config.dt, config.t_max);
  const long stride =
      config.record_stride > 0 ? config.record_stride : std::max(1L, steps / 1000);
  const double dt = config.dt;
  const Vector mean = config.x_mean.value_or(Vector::Zero(n));
  const Matrix cov0 = config.initial_cov.value_or(Matrix::Identity(n, n));
  if (mean.size() != n) throw ShapeError("monte_carlo: x_mean has the wrong length");
  if (cov0.rows() != n || cov0.cols() != n)
    throw ShapeError("monte_carlo: initial_cov must be n x n");
  const Matrix factor0 = covariance_factor(cov0);

  const StiefelFrame frame = stable_equilibrium(sys.a, config.rank);
  const Matrix& u = frame.matrix();
  const Matrix r0 = config.r0.value_or(symmetrize(u.transpose() * cov0 * u));
  if (r0.rows() != config.rank || r0.cols() != config.rank)
    throw ShapeError("monte_carlo: r0 must be r x r");

  MonteCarloReport report;
  report.n_paths = n_paths;
  report.aggregated = n_paths > 1;
  report.tolerance = 1.96 * std::sqrt(2.0 / static_cast<double>(n_paths));

  // Deterministic part: gains on every step, covariances on recorded steps.
  const RiccatiTerms full_terms = RiccatiTerms::full(sys);
  const LowRankDynamics dyn(sys, false, 1.0);
  const Matrix ct_prec = sys.c.transpose() * sys.noise_precision();
  const std::size_t gain_size = static_cast<std::size_t>(n * p);
  std::vector<double> gains_full(static_cast<std::size_t>(steps) * gain_size);
  std::vector<double> gains_lrkb(static_cast<std::size_t>(steps) * gain_size);
  std::vector<long> record_steps;
  Matrix p_full = symmetrize(cov0);
  LowRankState s{u, r0, symmetrize(cov0)};
  for (long k = 0; k <= steps; ++k) {
    if (is_record(k, steps, stride)) {
      record_steps.push_back(k);
      report.times.push_back(dt * static_cast<double>(k));
      report.p_hat.push_back(p_full);
      report.v_pred.push_back(s.v);
    }
    if (k == steps) break;
    const std::vector<double> kf = row_major(p_full * ct_prec);
    const std::vector<double> kl = row_major(lifted_of(s) * ct_prec);
    std::copy(kf.begin(), kf.end(), gains_full.begin() + static_cast<std::ptrdiff_t>(k * gain_size));
    std::copy(kl.begin(), kl.end(), gains_lrkb.begin() + static_cast<std::ptrdiff_t>(k * gain_size));
    p_full = riccati_rk4_step(full_terms, p_full, dt);
    s = dyn.step(s, dt);
    if (!p_full.allFinite() || !s.v.allFinite())
      throw DivergenceError("monte_carlo: covariance equations blew up",
                            dt * static_cast<double>(k + 1));
  }
  const double threshold = growth_threshold(cov0, config.growth_factor);
  for (const Matrix& v : report.v_pred) report.growth_flag |= v.trace() > threshold;

  // Stochastic part.
  const std::vector<double> a_rm = row_major(sys.a);
  const std::vector<double> c_rm = row_major(sys.c);
  const std::vector<double> g_rm = row_major(std::sqrt(dt) * sys.g);
  const std::vector<double> h_rm = row_major(sys.h / std::sqrt(dt));
  const std::vector<double> l0_rm = row_major(factor0);
  const std::size_t n_records = record_steps.size();
  const std::size_t nn = static_cast<std::size_t>(n * n);
  const std::size_t partial_size = 2 * n_records * nn;

  // Only the two estimation errors are carried: with v = H eta / sqrt(dt)
  // and w = G sqrt(dt) xi, e_{k+1} = e_k + dt (A e_k - K (C e_k - v_k)) - w_k.
  // The truth itself never enters, so unstable plants lose no precision.
  auto run_chunk = [&](std::size_t chunk, std::vector<double>& acc) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::vector<double> ef(n), el(n), xi(n), eta(p), v(p), w(n), innov(p), tmp(n), tmp2(n);
    const std::size_t first = chunk * kChunkPaths;
    const std::size_t last = std::min(n_paths, first + kChunkPaths);
    for (std::size_t path = first; path < last; ++path) {
      NormalStream rng(seed, path);
      for (Index i = 0; i < n; ++i) xi[i] = rng.normal();
      // x(0) = mean + L xi and both estimates start at the mean.
      matvec(l0_rm.data(), xi.data(), ef.data(), n, n);
      for (Index i = 0; i < n; ++i) {
        ef[i] = -ef[i];
        el[i] = ef[i];
      }
      std::size_t rec = 0;
      for (long k = 0; k <= steps; ++k) {
        if (rec < n_records && record_steps[rec] == k) {
          double* of = acc.data() + rec * nn;
          double* ol = acc.data() + (n_records + rec) * nn;
          for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) {
              of[i * n + j] += ef[i] * ef[j];
              ol[i * n + j] += el[i] * el[j];
            }
          ++rec;
        }
        if (k == steps) break;
        for (Index i = 0; i < n; ++i) xi[i] = rng.normal();
        for (Index i = 0; i < p; ++i) eta[i] = rng.normal();
        matvec(h_rm.data(), eta.data(), v.data(), p, p);
        matvec(g_rm.data(), xi.data(), w.data(), n, n);
        const std::size_t offset = static_cast<std::size_t>(k) * gain_size;
        for (int which = 0; which < 2; ++which) {
          std::vector<double>& e = which == 0 ? ef : el;
          const double* gain = (which == 0 ? gains_full.data() : gains_lrkb.data()) + offset;
          matvec(c_rm.data(), e.data(), innov.data(), p, n);
          for (Index i = 0; i < p; ++i) innov[i] -= v[i];
          matvec(a_rm.data(), e.data(), tmp.data(), n, n);
          matvec(gain, innov.data(), tmp2.data(), n, p);
          for (Index i = 0; i < n; ++i) e[i] += dt * (tmp[i] - tmp2[i]) - w[i];
        }
      }
    }
  };

  const std::size_t n_chunks = (n_paths + kChunkPaths - 1) / kChunkPaths;
  unsigned workers = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_chunks));
  std::vector<double> total(partial_size, 0.0);
  std::vector<std::vector<double>> partials(workers, std::vector<double>(partial_size));
  for (std::size_t wave = 0; wave < n_chunks; wave += workers) {
    const std::size_t count = std::min<std::size_t>(workers, n_chunks - wave);
    if (count == 1) {
      run_chunk(wave, partials[0]);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < count; ++w)
        pool.emplace_back([&, w] { run_chunk(wave + w, partials[w]); });
      for (std::thread& t : pool) t.join();
    }
    for (std::size_t w = 0; w < count; ++w)
      for (std::size_t i = 0; i < partial_size; ++i) total[i] += partials[w][i];
  }

  const double inv = 1.0 / static_cast<double>(n_paths);
  for (std::size_t rec = 0; rec < n_records; ++rec) {
    Matrix ef(n, n), el(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        ef(i, j) = total[rec * nn + static_cast<std::size_t>(i * n + j)] * inv;
        el(i, j) = total[(n_records + rec) * nn + static_cast<std::size_t>(i * n + j)] * inv;
      }
    const Matrix& v = report.v_pred[rec];
    double dev = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double scale = std::sqrt(std::max(0.0, v(i, i) * v(j, j)));
        if (scale > 0.0) dev = std::max(dev, std::abs(el(i, j) - v(i, j)) / scale);
      }
    report.rel_dev.push_back(dev);
    report.max_rel_dev = std::max(report.max_rel_dev, dev);
    report.emp_full.push_back(std::move(ef));
    report.emp_lrkb.push_back(std::move(el));
  }

  // Steady-state references.
  report.p_hat_s = solve_are(sys.a, sys.g, sys.c, sys.h);
  const LiftedSolution sol = reduced_steady_state(sys, frame);
  double max_re = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < sol.closed_loop_eigs.size(); ++i)
    max_re = std::max(max_re, sol.closed_loop_eigs[i].real());
  report.max_closed_loop_re = max_re;
  report.bounded = max_re < 0.0;
  if (report.bounded) {
    const Matrix info = sys.information();
    const Matrix v_inf = solve_lyapunov(sol.closed_loop_matrix(sys),
                                        sys.g * sys.g.transpose() + sol.lifted * info * sol.lifted);
    report.optimality_ok = v_inf.trace() >= report.p_hat_s.trace() - 1e-8;
    report.v_inf = symmetrize(v_inf);
  }
  return report;
}

}  // namespace lrkb
