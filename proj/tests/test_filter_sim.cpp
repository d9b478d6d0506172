#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "lrkb/ensembles.hpp"
#include "lrkb/errors.hpp"
#include "lrkb/filter_sim.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "oracles.hpp"

using namespace lrkb;

namespace {

LtiSystem diagonal_system(std::initializer_list<double> d) {
  const Index n = static_cast<Index>(d.size());
  LtiSystem sys;
  sys.a = Matrix::Zero(n, n);
  Index i = 0;
  for (double x : d) sys.a(i, i) = x, ++i;
  sys.g = Matrix::Identity(n, n);
  sys.c = Matrix::Ones(1, n);
  sys.h = Matrix::Identity(1, 1);
  return sys;
}

double max_dev(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return d;
}

double max_dev(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

TEST_CASE("grid steps round near-integers and otherwise round up") {
  CHECK(grid_steps(0.1, 1.0) == 10);
  CHECK(grid_steps(1e-3, 8.0) == 8000);
  CHECK(grid_steps(0.3, 1.0) == 4);
  CHECK(grid_steps(0.5, 0.0) == 0);
  CHECK_THROWS_AS(grid_steps(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(grid_steps(0.1, -1.0), ConfigError);
}

TEST_CASE("noise-free truth follows the matrix exponential within the Euler bound") {
  NormalStream rng(61, 0);
  LtiSystem sys = random_system(random_gapped_matrix(4, 2, rng), rng, 1);
  sys.g.setZero();
  Vector x0(4);
  x0 << 1, -2, 0.5, 3;
  const double dt = 1e-3, t_max = 1.0;
  const SimulationPath path = simulate_truth(sys, x0, dt, t_max, 7);
  REQUIRE(path.steps() == 1000);
  const double na = spectral_norm(sys.a);
  for (std::size_t k = 0; k <= path.steps(); k += 50) {
    const double t = path.times[k];
    const Vector exact = (sys.a * t).exp() * x0;
    const double bound = 0.5 * t * dt * na * na * std::exp((t + dt) * na) * x0.norm();
    CHECK((path.states[k] - exact).norm() <= bound + 1e-14);
  }
}

TEST_CASE("truth draws xi then eta on every step") {
  const LtiSystem sys = diagonal_system({1, -1});
  const double dt = 0.01;
  const SimulationPath path = simulate_truth(sys, Vector::Zero(2), dt, 0.05, 3);
  NormalStream ref(3, 0);
  Vector x = Vector::Zero(2);
  for (std::size_t k = 0; k <= path.steps(); ++k) {
    const double xi0 = ref.normal(), xi1 = ref.normal(), eta = ref.normal();
    CHECK(path.states[k] == x);
    CHECK(path.observation_noise[k](0) == (1.0 / std::sqrt(dt)) * eta);
    CHECK(path.observations[k](0) == doctest::Approx(x.sum() + eta / std::sqrt(dt)));
    if (k < path.steps()) {
      CHECK(path.process_increments[k](0) == std::sqrt(dt) * xi0);
      CHECK(path.process_increments[k](1) == std::sqrt(dt) * xi1);
      x += dt * (sys.a * x) + path.process_increments[k];
    }
  }
  CHECK(path.observation_noise.size() == path.steps() + 1);
  CHECK(path.process_increments.size() == path.steps());
}

TEST_CASE("carried error equals estimate minus state on a stable plant") {
  const LtiSystem sys = diagonal_system({0.5, -1, -2});
  const SimulationPath path = simulate_truth(sys, Vector::Ones(3), 1e-3, 2.0, 5);
  const FilterRun full = run_full_filter(sys, path, Vector::Zero(3), {Matrix::Identity(3, 3), 0.0});
  const FilterRun low = run_lrkb_filter(sys, path, stable_equilibrium(sys.a, 1), Vector::Zero(3),
                                        Matrix::Identity(1, 1));
  for (const FilterRun* run : {&full, &low}) {
    REQUIRE(run->errors.size() == path.steps() + 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < run->errors.size(); ++k)
      worst = std::max(worst, (run->errors[k] - (run->estimates[k] - path.states[k])).norm());
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("full-rank low-rank filter reproduces the Kalman-Bucy filter") {
  NormalStream rng(62, 0);
  for (int k = 0; k < 3; ++k) {
    const LtiSystem sys = random_system(random_gapped_matrix(3 + k, 1, rng), rng);
    const Index n = sys.n();
    const Matrix p0 = 2.0 * Matrix::Identity(n, n);
    const SimulationPath path = simulate_truth(sys, rng.matrix(n, 1).col(0), 1e-3, 1.0, 10 + k);
    const FilterRun full = run_full_filter(sys, path, Vector::Zero(n), {p0, 0.0});
    FilterOptions o;
    o.initial_error_cov = p0;
    const FilterRun low = run_lrkb_filter(sys, path, stable_equilibrium(sys.a, static_cast<int>(n)),
                                          Vector::Zero(n), p0, o);
    CHECK(max_dev(full.estimates, low.estimates) < 1e-8);
    CHECK(max_dev(full.lifted_cov, low.lifted_cov) < 1e-8);
    // With the optimal gain the closed-loop error covariance equals P.
    CHECK(max_dev(low.error_cov_pred, low.lifted_cov) < 1e-8);
  }
}

TEST_CASE("record stride keeps the final point") {
  const LtiSystem sys = diagonal_system({-1, -2});
  const SimulationPath path = simulate_truth(sys, Vector::Zero(2), 0.01, 1.05, 1);
  FilterOptions o;
  o.record_stride = 10;
  const FilterRun run = run_full_filter(sys, path, Vector::Zero(2), {Matrix::Identity(2, 2), 0.0}, o);
  REQUIRE(run.times.size() == 12);
  CHECK(run.times[1] == doctest::Approx(0.1));
  CHECK(run.times.back() == doctest::Approx(1.05));
}

TEST_CASE("a frame off the equilibrium set is rejected unless it is co-integrated") {
  NormalStream rng(63, 0);
  const LtiSystem sys = random_system(random_gapped_matrix(4, 2, rng), rng);
  const StiefelFrame u0 = random_stiefel(4, 2, rng);
  const SimulationPath path = simulate_truth(sys, Vector::Zero(4), 1e-3, 5.0, 2);
  CHECK_THROWS_AS(run_lrkb_filter(sys, path, u0, Vector::Zero(4), Matrix::Identity(2, 2)),
                  EquilibriumError);
  FilterOptions o;
  o.co_integrate_oja = true;
  o.record_stride = 1000;
  const FilterRun run = run_lrkb_filter(sys, path, u0, Vector::Zero(4), Matrix::Identity(2, 2), o);
  REQUIRE(run.frames.size() == run.times.size());
  // The frame does not see the filter, so it must follow the standalone flow.
  OjaOptions oo;
  oo.dt = 1e-3;
  oo.t_max = 5.0;
  oo.stop_on_convergence = false;
  const OjaTrajectory traj = integrate(sys.a, u0, oo);
  CHECK(max_principal_angle(run.frames.back().matrix(), traj.final().matrix()) < 1e-9);
  CHECK(orth_error(run.frames.back().matrix()) < 1e-9);
}

TEST_CASE("error covariance equation keeps the steady state and reaches the Lyapunov limit") {
  const LtiSystem sys = diagonal_system({1, -1, -2});
  const Matrix ps = solve_are(sys.a, sys.g, sys.c, sys.h);
  const std::vector<Matrix> schedule(2001, ps);
  const std::vector<Matrix> v = propagate_error_cov(sys, schedule, ps, 1e-3);
  CHECK((v.back() - ps).norm() < 1e-9);
  // A sub-optimal constant gain: V tends to the solution of the Lyapunov equation.
  const Matrix p = 2.0 * ps;
  const Matrix acl = sys.a - p * sys.information();
  const Matrix q = sys.g * sys.g.transpose() + p * sys.information() * p;
  const Matrix v_inf = oracle::lyapunov_kron(acl, q);
  const std::vector<Matrix> w = propagate_error_cov(sys, std::vector<Matrix>(20001, p),
                                                    Matrix::Identity(3, 3), 1e-3);
  CHECK((w.back() - v_inf).norm() < 1e-6 * v_inf.norm());
  CHECK(v_inf.trace() > ps.trace());
}

TEST_CASE("the unstable mode left out of the frame blows up the predicted error") {
  const LtiSystem sys = diagonal_system({2, 1, -1, -2});
  const SimulationPath path = simulate_truth(sys, Vector::Zero(4), 1e-3, 10.0, 4);
  FilterOptions o;
  o.record_stride = 100;
  const FilterRun r1 = run_lrkb_filter(sys, path, stable_equilibrium(sys.a, 1), Vector::Zero(4),
                                       Matrix::Identity(1, 1), o);
  CHECK(r1.growth_flag);
  const FilterRun r2 = run_lrkb_filter(sys, path, stable_equilibrium(sys.a, 2), Vector::Zero(4),
                                       Matrix::Identity(2, 2), o);
  CHECK_FALSE(r2.growth_flag);
  CHECK(r2.error_cov_pred.back().trace() < 1e3);
}

TEST_CASE("covariance factor handles definite and semidefinite input") {
  Matrix c(2, 2);
  c << 4, 2, 2, 3;
  Matrix l = covariance_factor(c);
  CHECK((l * l.transpose() - c).norm() < 1e-14);
  c << 1, 1, 1, 1;
  l = covariance_factor(c);
  CHECK((l * l.transpose() - c).norm() < 1e-14);
  c << 1, 2, 2, 1;
  CHECK_THROWS_AS(covariance_factor(c), ValidationError);
}

TEST_CASE("monte carlo is reproducible and independent of the thread count") {
  LtiSystem sys{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0),
                Matrix::Constant(1, 1, 1.0)};
  MonteCarloConfig cfg;
  cfg.t_max = 0.5;
  cfg.dt = 1e-2;
  const MonteCarloReport a = monte_carlo(sys, cfg, 600, 9, 1);
  const MonteCarloReport b = monte_carlo(sys, cfg, 600, 9, 3);
  REQUIRE(a.emp_lrkb.size() == b.emp_lrkb.size());
  for (std::size_t k = 0; k < a.emp_lrkb.size(); ++k) {
    CHECK(a.emp_lrkb[k](0, 0) == b.emp_lrkb[k](0, 0));
    CHECK(a.emp_full[k](0, 0) == b.emp_full[k](0, 0));
  }
  CHECK(a.aggregated);
  CHECK(a.tolerance == doctest::Approx(1.96 * std::sqrt(2.0 / 600)));
  CHECK(a.times.back() == doctest::Approx(0.5));
  // r = n: both filters coincide path by path.
  CHECK(a.emp_full.back()(0, 0) == doctest::Approx(a.emp_lrkb.back()(0, 0)).epsilon(1e-12));
  // At t = 0 the error is -x(0) with x(0) ~ N(0, 1).
  CHECK(std::abs(a.emp_lrkb.front()(0, 0) - 1.0) < 4.0 * std::sqrt(2.0 / 600));
  const MonteCarloReport one = monte_carlo(sys, cfg, 1, 9);
  CHECK_FALSE(one.aggregated);
  CHECK(a.bounded);
  REQUIRE(a.v_inf.has_value());
  CHECK((*a.v_inf)(0, 0) == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-10));
  CHECK(a.optimality_ok);
}

TEST_CASE("monte carlo arguments are checked") {
  const LtiSystem sys = diagonal_system({1, -1});
  MonteCarloConfig cfg;
  cfg.t_max = 0.1;
  CHECK_THROWS_AS(monte_carlo(sys, cfg, 0, 1), ConfigError);
  cfg.rank = 3;
  CHECK_THROWS_AS(monte_carlo(sys, cfg, 10, 1), ConfigError);
  cfg.rank = 1;
  cfg.x_mean = Vector::Zero(3);
  CHECK_THROWS_AS(monte_carlo(sys, cfg, 10, 1), ShapeError);
}
