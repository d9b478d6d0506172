#include "lrkb/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lrkb/errors.hpp"
#include "lrkb/filter_sim.hpp"
#include "lrkb/io.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "lrkb/riccati.hpp"
#include "lrkb/scenario.hpp"
#include "lrkb/spectral.hpp"
#include "lrkb/stiefel.hpp"
#include "lrkb/systems.hpp"
#include "lrkb/verification.hpp"

namespace lrkb {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string only;
};

struct Context {
  ScenarioConfig cfg;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

Context load_context(const Globals& g, bool config_required) {
  Context ctx;
  if (!g.config.empty()) {
    ctx.cfg = load_scenario(g.config);
  } else if (config_required) {
    throw ConfigError("--config is required for this command");
  }
  if (config_required && !ctx.cfg.has_system)
    throw ConfigError(g.config + ": no system given (A/G/C/H or a system entry)");
  ctx.seed = g.seed_given ? g.seed : ctx.cfg.seed;
  ctx.out_dir = g.out.empty() ? fs::path(ctx.cfg.output_dir) : fs::path(g.out);
  return ctx;
}

struct RankChoice {
  int rank = 1;
  std::string source;
};

// "auto" takes the smallest admissible rank; r = n is always admissible.
RankChoice resolve_rank(const ScenarioConfig& cfg) {
  const int n = static_cast<int>(cfg.system.n());
  if (cfg.rank) return {*cfg.rank, "explicit"};
  const int unstable = count_unstable(sorted_eigenvalues(cfg.system.a), cfg.unstable_threshold);
  if (std::max(unstable, 1) >= n) return {n, "auto"};
  try {
    return {minimal_rank(cfg.system, 1, cfg.unstable_threshold), "auto"};
  } catch (const GapError&) {
    return {n, "auto"};
  }
}

Json selection_json(const std::vector<int>& selection) {
  Json out = Json::array();
  for (int i : selection) out.push_back(i + 1);
  return out;
}

Json attraction_json(const AttractionEstimate& est) {
  Json j;
  j["beta"] = est.beta ? Json(*est.beta) : Json(nullptr);
  j["ell_max"] = est.ell_max;
  j["lambda_l1_r"] = est.lambda_l1_r;
  j["lambda_l2_1"] = std::isfinite(est.lambda_l2_1) ? Json(est.lambda_l2_1) : Json(nullptr);
  j["gap_ok"] = est.gap_ok;
  return j;
}

// Labels each computed closed-loop eigenvalue with the predicted group of its
// nearest unused prediction.
std::vector<std::string> eigen_sources(const LiftedSolution& sol) {
  struct Pred {
    Complex z;
    const char* source;
    bool used = false;
  };
  std::vector<Pred> preds;
  for (Index i = 0; i < sol.reduced_closed_loop.size(); ++i)
    preds.push_back({sol.reduced_closed_loop[i], "reduced"});
  for (Index i = 0; i < sol.retained_eigs.size(); ++i) preds.push_back({sol.retained_eigs[i], "retained"});
  std::vector<std::string> out;
  for (Index i = 0; i < sol.closed_loop_eigs.size(); ++i) {
    std::size_t best = preds.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < preds.size(); ++k) {
      if (preds[k].used) continue;
      const double d = std::abs(preds[k].z - sol.closed_loop_eigs[i]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best == preds.size()) {
      out.emplace_back("unmatched");
    } else {
      preds[best].used = true;
      out.emplace_back(preds[best].source);
    }
  }
  return out;
}

Json rank_report_json(const RankConditionReport& rep) {
  Json j;
  j["rank"] = rep.rank;
  j["unstable_count"] = rep.unstable_count;
  j["rank_sufficient"] = rep.rank_sufficient;
  j["max_closed_loop_re"] = rep.max_closed_loop_re;
  j["verdict"] = rep.bounded ? "bounded" : "unbounded";
  j["closed_loop_eigenvalues"] = to_json(rep.solution.closed_loop_eigs);
  j["reduced_closed_loop"] = to_json(rep.solution.reduced_closed_loop);
  j["retained_eigenvalues"] = to_json(rep.solution.retained_eigs);
  j["reduced_covariance"] = to_json(rep.solution.reduced);
  j["lifted_covariance"] = to_json(rep.solution.lifted);
  return j;
}

// ---------------------------------------------------------------------------

int cmd_analyze(const Globals& g, std::ostream& out) {
  const Context ctx = load_context(g, true);
  const ScenarioConfig& cfg = ctx.cfg;
  const LtiSystem& sys = cfg.system;
  const int n = static_cast<int>(sys.n());
  const CVector ev = sorted_eigenvalues(sys.a);
  const RankChoice rc = resolve_rank(cfg);
  const int r = rc.rank;

  Json rep;
  rep["command"] = "analyze";
  rep["n"] = n;
  rep["p"] = sys.p();
  rep["seed"] = ctx.seed;
  rep["eigenvalues"] = to_json(ev);
  rep["unstable_threshold"] = cfg.unstable_threshold;
  rep["unstable_count"] = count_unstable(ev, cfg.unstable_threshold);
  try {
    rep["minimal_rank"] = minimal_rank(sys, 0, cfg.unstable_threshold);
  } catch (const GapError& e) {
    rep["minimal_rank"] = nullptr;
    rep["minimal_rank_error"] = e.what();
  }
  rep["rank"] = r;
  rep["rank_source"] = rc.source;

  Json gaps = Json::array();
  for (int k = 1; k <= n - 1; ++k) {
    Json row;
    row["r"] = k;
    row["gap"] = ev[k - 1].real() - ev[k].real();
    row["gap_ok"] = spectral_gap_ok(ev, k);
    if (spectral_gap_ok(ev, k)) {
      row["attraction"] = attraction_json(attraction_beta(ordered_schur(sys.a, k)));
    } else {
      row["attraction"] = nullptr;
    }
    gaps.push_back(std::move(row));
  }
  rep["gaps"] = std::move(gaps);

  // The rank-specific part fails with a gap diagnostic when r splits no gap.
  const StiefelFrame stable = stable_equilibrium(sys.a, r);
  std::optional<SchurData> schur;
  std::optional<AttractionEstimate> est;
  if (r < n) {
    schur = ordered_schur(sys.a, r);
    est = attraction_beta(*schur);
    rep["attraction"] = attraction_json(*est);
  } else {
    rep["attraction"] = nullptr;
  }

  const EquilibriumEnumeration eq = enumerate_equilibria(sys.a, r);
  Json families = Json::array();
  int stable_count = 0;
  for (const EquilibriumFamily& f : eq.families) {
    Json fj;
    fj["selection"] = selection_json(f.selection);
    CVector sel(static_cast<Index>(f.selection.size()));
    for (std::size_t i = 0; i < f.selection.size(); ++i) sel[static_cast<Index>(i)] = ev[f.selection[i]];
    fj["eigenvalues"] = to_json(sel);
    fj["is_stable"] = f.is_stable;
    fj["linearization_rate"] = f.linearization_rate;
    fj["degenerate"] = f.degenerate;
    stable_count += f.is_stable ? 1 : 0;
    families.push_back(std::move(fj));
  }
  Json eqj;
  eqj["rank"] = r;
  eqj["count"] = eq.families.size();
  eqj["stable_count"] = stable_count;
  eqj["truncated"] = eq.truncated;
  eqj["families"] = std::move(families);
  rep["equilibria"] = std::move(eqj);

  if (r < n) {
    const StiefelFrame u0 = random_stiefel(n, r, ctx.seed);
    OjaOptions opt;
    opt.epsilon = cfg.epsilon;
    opt.dt = cfg.dt;
    opt.t_max = cfg.oja_t_max;
    const OjaTrajectory traj = integrate(sys.a, u0, opt);
    CsvWriter csv(ctx.out_dir / "oja_trajectory.csv",
                  {"t", "residual", "subspace_angle_to_stable", "orth_error"});
    std::vector<Matrix> frames;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      csv.row({traj.times[i], traj.residuals[i],
               max_principal_angle(traj.frames[i].matrix(), stable.matrix()), traj.orth_errors[i]});
      frames.push_back(traj.frames[i].matrix());
    }
    write_binary(ctx.out_dir / "oja_frames.bin", frames);
    Json oj;
    oj["epsilon"] = cfg.epsilon;
    oj["dt"] = traj.dt;
    oj["steps"] = traj.steps;
    oj["records"] = traj.times.size();
    oj["converged"] = traj.converged;
    oj["final_time"] = traj.final_time();
    oj["final_residual"] = traj.final_residual();
    oj["final_angle_to_stable"] = max_principal_angle(traj.final().matrix(), stable.matrix());
    oj["u0_discarded_component"] = discarded_component(*schur, u0);
    oj["u0_inside_attraction_domain"] =
        est->gap_ok ? Json(in_attraction_domain(*schur, *est, u0).inside) : Json(nullptr);
    rep["oja"] = std::move(oj);
  } else {
    rep["oja"] = nullptr;
  }

  const bool controllable = pbh_controllable(sys.a, sys.g);
  const bool observable = pbh_observable(sys.a, sys.c);
  rep["controllable"] = controllable;
  rep["observable"] = observable;
  std::string verdict = "n/a";
  if (controllable && observable) {
    const RankConditionReport rcr = rank_condition_report(sys, r, {}, cfg.unstable_threshold);
    verdict = rcr.bounded ? "bounded" : "unbounded";
    rep["rank_condition"] = rank_report_json(rcr);
    CsvWriter csv(ctx.out_dir / "steady_state.csv", {"re", "im", "source"});
    const std::vector<std::string> sources = eigen_sources(rcr.solution);
    for (Index i = 0; i < rcr.solution.closed_loop_eigs.size(); ++i)
      csv.row({rcr.solution.closed_loop_eigs[i].real(), rcr.solution.closed_loop_eigs[i].imag()},
              sources[static_cast<std::size_t>(i)]);
    write_binary(ctx.out_dir / "lifted.bin", {rcr.solution.lifted});
  } else {
    rep["rank_condition"] = nullptr;
  }
  write_json(ctx.out_dir / "analysis.json", rep);

  out << "n = " << n << ", rank = " << r << " (" << rc.source << "), unstable count = "
      << rep["unstable_count"].get<int>() << "\n";
  out << "equilibrium families: " << eq.families.size() << ", stable: " << stable_count << "\n";
  if (est) out << "beta = " << (est->beta ? format_double(*est->beta) : "undefined") << "\n";
  out << "rank condition verdict: " << verdict << "\n";
  out << "wrote " << (ctx.out_dir / "analysis.json").string() << "\n";
  return kExitOk;
}

int cmd_filter(const Globals& g, std::ostream& out) {
  const Context ctx = load_context(g, true);
  const ScenarioConfig& cfg = ctx.cfg;
  const LtiSystem& sys = cfg.system;
  const Index n = sys.n();
  const RankChoice rc = resolve_rank(cfg);
  const int r = rc.rank;

  const Vector mean = cfg.x0.value_or(Vector::Zero(n));
  const Matrix cov0 = cfg.initial_cov.value_or(Matrix::Identity(n, n));
  NormalStream rng(ctx.seed, 0);
  Vector xi(n);
  rng.fill(xi);
  const Vector x0 = mean + covariance_factor(cov0) * xi;
  const SimulationPath path = simulate_truth(sys, x0, cfg.dt_sim, cfg.t_max, rng);
  const long steps = static_cast<long>(path.steps());
  const long stride = cfg.record_stride > 0 ? cfg.record_stride : std::max(1L, steps / 10000);

  const RankConditionReport rcr = rank_condition_report(sys, r, {}, cfg.unstable_threshold);
  FilterOptions fo;
  fo.record_stride = stride;
  fo.initial_error_cov = cov0;
  fo.co_integrate_oja = cfg.co_integrate_oja;
  fo.epsilon = cfg.epsilon;
  const StiefelFrame frame =
      cfg.co_integrate_oja ? random_stiefel(n, r, ctx.seed) : stable_equilibrium(sys.a, r);
  const Matrix& u = frame.matrix();
  const Matrix r0 = cfg.r0.value_or(symmetrize(u.transpose() * cov0 * u));
  if (r0.rows() != r || r0.cols() != r) throw ConfigError("r0 must be rank x rank");

  const FilterRun full = run_full_filter(sys, path, mean, RiccatiState{cov0, 0.0}, fo);
  const FilterRun lrkb = run_lrkb_filter(sys, path, frame, mean, r0, fo);

  CsvWriter csv(ctx.out_dir / "run.csv",
                {"t", "err_norm_full", "err_norm_lrkb", "trace_V_pred", "trace_V_emp", "trace_Phat"});
  double est_dev = 0.0, cov_dev = 0.0;
  for (std::size_t i = 0; i < lrkb.times.size(); ++i) {
    csv.row({lrkb.times[i], full.errors[i].norm(), lrkb.errors[i].norm(),
             lrkb.error_cov_pred[i].trace(), lrkb.errors[i].squaredNorm(), full.lifted_cov[i].trace()});
    est_dev = std::max(est_dev, (full.estimates[i] - lrkb.estimates[i]).cwiseAbs().maxCoeff());
    cov_dev = std::max(cov_dev, (full.lifted_cov[i] - lrkb.lifted_cov[i]).cwiseAbs().maxCoeff());
  }

  Json sum;
  sum["command"] = "filter";
  sum["n"] = n;
  sum["p"] = sys.p();
  sum["rank"] = r;
  sum["rank_source"] = rc.source;
  sum["seed"] = ctx.seed;
  sum["dt_sim"] = cfg.dt_sim;
  sum["t_max"] = path.times.back();
  sum["steps"] = steps;
  sum["record_stride"] = stride;
  sum["co_integrate_oja"] = cfg.co_integrate_oja;
  sum["unstable_count"] = rcr.unstable_count;
  sum["verdict"] = rcr.bounded ? "bounded" : "unbounded";
  sum["max_closed_loop_re"] = rcr.max_closed_loop_re;
  sum["growth_flag"] = lrkb.growth_flag;
  sum["growth_factor"] = fo.growth_factor;
  sum["trace_V_initial"] = lrkb.error_cov_pred.front().trace();
  sum["trace_V_final"] = lrkb.error_cov_pred.back().trace();
  sum["trace_V_max"] = lrkb.max_trace;
  sum["trace_Phat_final"] = full.lifted_cov.back().trace();
  sum["max_estimate_deviation"] = est_dev;
  sum["max_covariance_deviation"] = cov_dev;
  sum["final_error_full"] = to_json(Vector(full.errors.back()));
  sum["final_error_lrkb"] = to_json(Vector(lrkb.errors.back()));
  write_json(ctx.out_dir / "summary.json", sum);

  out << "rank = " << r << " (" << rc.source << "), verdict: " << sum["verdict"].get<std::string>()
      << ", growth flag: " << (lrkb.growth_flag ? "set" : "clear") << "\n";
  out << "trace V: initial " << format_double(sum["trace_V_initial"].get<double>()) << ", final "
      << format_double(sum["trace_V_final"].get<double>()) << "\n";
  out << "full vs low-rank max deviation: estimate " << format_double(est_dev) << ", covariance "
      << format_double(cov_dev) << "\n";
  out << "wrote " << (ctx.out_dir / "run.csv").string() << "\n";
  return kExitOk;
}

int cmd_montecarlo(const Globals& g, std::ostream& out) {
  const Context ctx = load_context(g, true);
  const ScenarioConfig& cfg = ctx.cfg;
  const LtiSystem& sys = cfg.system;
  const RankChoice rc = resolve_rank(cfg);

  MonteCarloConfig mc;
  mc.dt = cfg.dt_sim;
  mc.t_max = cfg.t_max;
  mc.rank = rc.rank;
  mc.x_mean = cfg.x0;
  mc.initial_cov = cfg.initial_cov;
  mc.r0 = cfg.r0;
  mc.record_stride = cfg.record_stride;
  const MonteCarloReport rep = monte_carlo(sys, mc, cfg.n_paths, ctx.seed, cfg.threads);

  CsvWriter csv(ctx.out_dir / "montecarlo.csv", {"t", "trace_V_pred", "trace_emp_lrkb",
                                                 "trace_emp_full", "trace_Phat", "max_rel_dev"});
  for (std::size_t i = 0; i < rep.times.size(); ++i)
    csv.row({rep.times[i], rep.v_pred[i].trace(), rep.emp_lrkb[i].trace(), rep.emp_full[i].trace(),
             rep.p_hat[i].trace(), rep.rel_dev[i]});

  Json j;
  j["command"] = "montecarlo";
  j["n"] = sys.n();
  j["rank"] = rc.rank;
  j["rank_source"] = rc.source;
  j["seed"] = ctx.seed;
  j["n_paths"] = rep.n_paths;
  j["dt_sim"] = cfg.dt_sim;
  j["t_max"] = rep.times.back();
  j["records"] = rep.times.size();
  j["aggregated"] = rep.aggregated;
  if (rep.aggregated) {
    j["tolerance"] = rep.tolerance;
    j["max_rel_dev"] = rep.max_rel_dev;
    j["final_rel_dev"] = rep.rel_dev.back();
    j["final_within_tolerance"] = rep.rel_dev.back() <= rep.tolerance;
  } else {
    j["tolerance"] = nullptr;
    j["max_rel_dev"] = nullptr;
    j["final_rel_dev"] = nullptr;
    j["final_within_tolerance"] = nullptr;
  }
  Json fin;
  fin["V_pred"] = to_json(rep.v_pred.back());
  fin[rep.aggregated ? "emp_lrkb" : "outer_product_lrkb"] = to_json(rep.emp_lrkb.back());
  fin[rep.aggregated ? "emp_full" : "outer_product_full"] = to_json(rep.emp_full.back());
  fin["P_hat"] = to_json(rep.p_hat.back());
  j["final"] = std::move(fin);
  j["verdict"] = rep.bounded ? "bounded" : "unbounded";
  j["max_closed_loop_re"] = rep.max_closed_loop_re;
  j["growth_flag"] = rep.growth_flag;
  j["V_inf"] = rep.v_inf ? to_json(*rep.v_inf) : Json(nullptr);
  j["P_s"] = to_json(rep.p_hat_s);
  j["optimality_ok"] = rep.optimality_ok;
  write_json(ctx.out_dir / "montecarlo.json", j);

  out << rep.n_paths << " paths, rank " << rc.rank << ", verdict "
      << (rep.bounded ? "bounded" : "unbounded") << "\n";
  if (rep.aggregated)
    out << "final relative deviation " << format_double(rep.rel_dev.back()) << " (tolerance "
        << format_double(rep.tolerance) << ")\n";
  out << "wrote " << (ctx.out_dir / "montecarlo.json").string() << "\n";
  return kExitOk;
}

int cmd_verify(const Globals& g, std::ostream& out) {
  const Context ctx = load_context(g, false);
  VerifyOptions opt;
  opt.seed = ctx.seed;
  opt.tol_scale = ctx.cfg.tol_scale;
  opt.systems = ctx.cfg.verify_systems;

  std::vector<std::string> suites;
  if (g.only.empty()) {
    suites = suite_names();
  } else {
    std::stringstream ss(g.only);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto& names = suite_names();
      if (std::find(names.begin(), names.end(), item) == names.end()) {
        std::string all;
        for (const auto& nm : names) all += (all.empty() ? "" : ", ") + nm;
        throw ConfigError("--only: unknown suite '" + item + "' (known: " + all + ")");
      }
      suites.push_back(item);
    }
    if (suites.empty()) throw ConfigError("--only: no suite given");
  }

  Json rep;
  rep["command"] = "verify";
  rep["seed"] = ctx.seed;
  rep["tol_scale"] = opt.tol_scale;
  rep["systems"] = opt.systems;
  Json results = Json::array();
  bool all_passed = true;
  for (const std::string& name : suites) {
    const SuiteResult res = run_suite(name, opt);
    all_passed = all_passed && res.passed;
    out << (res.passed ? "PASS " : "FAIL ") << name << "  checks=" << res.checks
        << " failures=" << res.failures << " worst=" << format_double(res.worst)
        << " tol=" << format_double(res.tolerance) << "\n";
    Json rj;
    rj["name"] = name;
    rj["description"] = res.description;
    rj["passed"] = res.passed;
    rj["checks"] = res.checks;
    rj["failures"] = res.failures;
    rj["worst"] = res.worst;
    rj["tolerance"] = res.tolerance;
    Json files = Json::array();
    if (!res.passed) {
      out << "  " << res.message << "\n";
      rj["message"] = res.message;
      for (std::size_t k = 0; k < res.witnesses.size(); ++k) {
        const Witness& w = res.witnesses[k];
        Json wj;
        wj["suite"] = name;
        wj["label"] = w.label;
        for (const auto& [key, m] : w.matrices) wj["matrices"][key] = to_json(m);
        for (const auto& [key, v] : w.scalars) wj["scalars"][key] = v;
        const fs::path file = ctx.out_dir / "witnesses" / (name + "_" + std::to_string(k) + ".json");
        write_json(file, wj);
        files.push_back(file.string());
        out << "  witness: " << file.string() << "\n";
      }
    }
    rj["witnesses"] = std::move(files);
    results.push_back(std::move(rj));
  }
  rep["suites"] = std::move(results);
  rep["passed"] = all_passed;
  write_json(ctx.out_dir / "verify.json", rep);
  return all_passed ? kExitOk : kExitPropertyFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank Kalman-Bucy filtering: analysis, simulation and verification"};
  app.name("lrkb");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Scenario JSON file");
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory (overrides output_dir)");
  app.add_option("--only", g.only, "Comma-separated verification suites");

  auto* analyze = app.add_subcommand("analyze", "Spectrum, gaps, equilibria and rank condition");
  auto* filter = app.add_subcommand("filter", "Simulate one path and run both filters");
  auto* verify = app.add_subcommand("verify", "Run the property verification suites");
  auto* montecarlo = app.add_subcommand("montecarlo", "Monte Carlo check of the error covariance");
  for (auto* sub : {analyze, filter, verify, montecarlo}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (analyze->parsed()) return cmd_analyze(g, out);
    if (filter->parsed()) return cmd_filter(g, out);
    if (verify->parsed()) return cmd_verify(g, out);
    if (montecarlo->parsed()) return cmd_montecarlo(g, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ValidationError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const GapError& e) {
    err << "numeric failure (spectral gap): " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const std::exception& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumericFailure;
  }
  return kExitConfigError;
}

}  // namespace lrkb
