#include "lrkb/verification.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "lrkb/ensembles.hpp"
#include "lrkb/errors.hpp"
#include "lrkb/linalg.hpp"
#include "lrkb/oja_flow.hpp"
#include "lrkb/riccati.hpp"
#include "lrkb/spectral.hpp"
#include "lrkb/systems.hpp"

namespace lrkb {

namespace {

using WitnessFn = std::function<Witness()>;

class Tally {
 public:
  Tally(SuiteResult& result, const VerifyOptions& options, double tolerance)
      : result_(result), options_(options), tol_(tolerance) {
    result_.tolerance = tol_ * options.tol_scale;
  }

  /// Passes when metric < tol_scale * base (the suite tolerance by default).
  void bound(double metric, const std::string& what, const WitnessFn& witness) {
    bound(metric, tol_, what, witness);
  }
  void bound(double metric, double base, const std::string& what, const WitnessFn& witness) {
    const double tol = base * options_.tol_scale;
    if (base == tol_)
      result_.worst = std::max(result_.worst, std::isfinite(metric) ? metric : HUGE_VAL);
    std::ostringstream os;
    os << what << ": " << metric << " not below " << tol;
    record(metric < tol, os.str(), witness);
  }

  void expect(bool ok, const std::string& what, const WitnessFn& witness) {
    record(ok, what, witness);
  }

  /// Runs `body`; a library error thrown from it counts as one failed check.
  void guarded(const std::string& what, const std::function<void()>& body, const WitnessFn& witness) {
    try {
      body();
    } catch (const Error& e) {
      record(false, what + ": " + e.what(), witness);
    }
  }

 private:
  void record(bool ok, const std::string& message, const WitnessFn& witness) {
    ++result_.checks;
    if (ok) return;
    ++result_.failures;
    result_.passed = false;
    if (result_.message.empty()) result_.message = message;
    if (result_.witnesses.size() < options_.max_witnesses) {
      Witness w = witness ? witness() : Witness{};
      if (w.label.empty()) w.label = message;
      else w.label += ": " + message;
      result_.witnesses.push_back(std::move(w));
    }
  }

  SuiteResult& result_;
  const VerifyOptions& options_;
  double tol_;
};

std::uint64_t stream_for(const std::string& suite, int index) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char ch : suite) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
  return kEnsembleStream ^ (h << 16) ^ static_cast<std::uint64_t>(index);
}

int uniform_int(NormalStream& rng, int lo, int hi) {
  const int v = lo + static_cast<int>(std::floor(rng.uniform() * (hi - lo + 1)));
  return std::min(v, hi);
}

struct Drawn {
  LtiSystem sys;
  int r = 1;
};

Drawn draw_system(NormalStream& rng, int n_min, int n_max, const SpectrumOptions& spec = {}) {
  const int n = uniform_int(rng, n_min, n_max);
  const int r = uniform_int(rng, 1, n - 1);
  const Matrix a = random_gapped_matrix(n, r, rng, spec);
  return Drawn{random_system(a, rng), r};
}

Witness system_witness(const std::string& label, const LtiSystem& sys, int r) {
  Witness w;
  w.label = label;
  w.matrices = {{"A", sys.a}, {"G", sys.g}, {"C", sys.c}, {"H", sys.h}};
  w.scalars = {{"rank", static_cast<double>(r)}};
  return w;
}

CVector concat(const CVector& a, const CVector& b) {
  CVector out(a.size() + b.size());
  out << a, b;
  return out;
}

CVector selected(const CVector& ev, const std::vector<int>& idx) {
  CVector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = ev[idx[i]];
  return out;
}

std::string label_of(const char* what, int index) {
  std::ostringstream os;
  os << what << " #" << index;
  return os.str();
}

LtiSystem diagonal_system(const std::vector<double>& diag) {
  const Index n = static_cast<Index>(diag.size());
  LtiSystem sys;
  sys.a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) sys.a(i, i) = diag[static_cast<std::size_t>(i)];
  sys.g = Matrix::Identity(n, n);
  sys.c = Matrix::Ones(1, n);
  sys.h = Matrix::Identity(1, 1);
  return sys;
}

// ---------------------------------------------------------------------------

void suite_prop3(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1e-6);
  for (int k = 0; k < opt.systems; ++k) {
    NormalStream rng(opt.seed, stream_for("prop3", k));
    const int n = uniform_int(rng, 3, 8);
    const int r = uniform_int(rng, 1, n - 1);
    const Matrix a = random_gapped_matrix(n, r, rng);
    const CVector ev = sorted_eigenvalues(a);
    LtiSystem shown{a, Matrix::Identity(n, n), Matrix::Identity(1, n), Matrix::Identity(1, 1)};
    auto witness = [&] { return system_witness(label_of("system", k), shown, r); };
    tally.guarded("eigenvalue retention", [&] {
      const EquilibriumEnumeration all = enumerate_equilibria(a, r, 64);
      // The stable family and the last enumerated one, which is never the identity selection.
      std::vector<const EquilibriumFamily*> picks{&all.families.front()};
      if (all.families.size() > 1) picks.push_back(&all.families.back());
      for (const EquilibriumFamily* f : picks) {
        const Matrix& u = f->representative.matrix();
        const double d =
            multiset_distance(sorted_eigenvalues(u.transpose() * a * u), selected(ev, f->selection));
        tally.bound(d, "eig(U^T A U) vs selected eigenvalues", witness);
      }
    }, witness);
  }
}

void suite_prop4(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1e-5);
  Matrix a(2, 2);
  a << 2.0, 0.5, 0.0, -1.0;
  // Exceptional directions: the eigenvector of the discarded eigenvalue -1.
  const double exceptional = std::atan2(-6.0, 1.0);
  const Matrix dominant = Matrix::Identity(2, 1);
  for (int k = 0; k < 360; ++k) {
    const double theta = 2.0 * std::numbers::pi * (k + 0.5) / 360.0;
    const double offset = std::remainder(theta - exceptional, std::numbers::pi);
    if (std::abs(offset) < 1e-9) continue;
    Matrix u0(2, 1);
    u0 << std::cos(theta), std::sin(theta);
    auto witness = [&] {
      Witness w;
      w.matrices = {{"A", a}, {"U0", u0}};
      w.scalars = {{"theta", theta}};
      return w;
    };
    tally.guarded("(2,1) convergence", [&] {
      const OjaTrajectory traj = integrate(a, StiefelFrame(u0));
      tally.expect(traj.converged, label_of("trajectory did not converge, angle", k), witness);
      tally.bound(max_principal_angle(traj.final().matrix(), dominant),
                  "angle to dominant direction", witness);
    }, witness);
  }
}

template <typename Test>
void pbh_transfer(SuiteResult& res, const VerifyOptions& opt, const char* name, Test test) {
  Tally tally(res, opt, kTolRank);
  for (int k = 0; k < opt.systems; ++k) {
    NormalStream rng(opt.seed, stream_for(name, k));
    const Drawn d = draw_system(rng, 3, 10);
    auto witness = [&] { return system_witness(label_of("system", k), d.sys, d.r); };
    tally.guarded("PBH transfer", [&] {
      const ReducedSystem red = reduce(d.sys, stable_equilibrium(d.sys.a, d.r));
      tally.expect(test(red, kTolRank), "reduced triple fails the PBH test", witness);
    }, witness);
  }
}

void suite_prop7(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1e-8);
  for (int k = 0; k < opt.systems; ++k) {
    NormalStream rng(opt.seed, stream_for("prop7", k));
    const Drawn d = draw_system(rng, 3, 8);
    auto witness = [&] { return system_witness(label_of("system", k), d.sys, d.r); };
    tally.guarded("lifted uniqueness", [&] {
      const StiefelFrame frame = stable_equilibrium(d.sys.a, d.r);
      std::vector<Matrix> lifted;
      lifted.push_back(reduced_steady_state(d.sys, frame).lifted);
      for (int j = 0; j < 9; ++j)
        lifted.push_back(
            reduced_steady_state(d.sys, frame.rotated(random_orthogonal(d.r, rng))).lifted);
      // A second Schur computation through the equilibrium enumeration.
      const EquilibriumEnumeration all = enumerate_equilibria(d.sys.a, d.r, 1);
      lifted.push_back(reduced_steady_state(d.sys, all.families.front().representative).lifted);
      double worst = 0.0;
      for (std::size_t i = 0; i < lifted.size(); ++i)
        for (std::size_t j = i + 1; j < lifted.size(); ++j)
          worst = std::max(worst, (lifted[i] - lifted[j]).norm());
      tally.bound(worst, "pairwise lifted difference", witness);
    }, witness);
  }
}

void suite_prop8(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1e-6);
  for (int k = 0; k < opt.systems; ++k) {
    NormalStream rng(opt.seed, stream_for("prop8", k));
    const Drawn d = draw_system(rng, 2, 12);
    auto witness = [&] { return system_witness(label_of("system", k), d.sys, d.r); };
    tally.guarded("closed-loop spectrum", [&] {
      const LiftedSolution sol = reduced_steady_state(d.sys, stable_equilibrium(d.sys.a, d.r));
      tally.bound(multiset_distance(sol.closed_loop_eigs,
                                    concat(sol.reduced_closed_loop, sol.retained_eigs)),
                  "spectrum identity", witness);
    }, witness);
  }
}

void suite_thm1(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1e-9);
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << 3.0, 1.0, -2.0;
  for (int r = 1; r <= 2; ++r) {
    auto witness = [&] {
      Witness w;
      w.matrices = {{"A", a}};
      w.scalars = {{"rank", static_cast<double>(r)}};
      return w;
    };
    tally.guarded("stability classification", [&] {
      const EquilibriumEnumeration all = enumerate_equilibria(a, r);
      int stable = 0;
      for (const EquilibriumFamily& f : all.families) stable += f.is_stable ? 1 : 0;
      tally.expect(all.families.size() == 3 && stable == 1,
                   "expected 3 families with exactly one stable", witness);
      NormalStream rng(opt.seed, stream_for("thm1", r));
      for (const EquilibriumFamily& f : all.families) {
        const Matrix& rep = f.representative.matrix();
        const StiefelFrame start =
            StiefelFrame::orthonormalized(rep + 1e-6 * rng.matrix(3, static_cast<Index>(r)));
        if (f.is_stable) {
          const OjaTrajectory traj = integrate(a, start);
          tally.bound(traj.final_residual(), "perturbed stable family residual", witness);
        } else {
          OjaOptions o;
          o.t_max = 50.0;
          o.stop_on_convergence = false;
          o.record_stride = 1;
          const OjaTrajectory traj = integrate(a, start, o);
          double farthest = 0.0;
          for (const StiefelFrame& u : traj.frames)
            farthest = std::max(farthest, max_principal_angle(u.matrix(), rep));
          tally.expect(farthest > 1e-3, "perturbed unstable family did not leave its neighborhood",
                       witness);
        }
      }
    }, witness);
  }
}

void suite_thm2(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1e-5);
  // Symmetric A: the Schur form is diagonal, so beta is exactly one.
  for (int k = 0; k < std::max(1, opt.systems / 4); ++k) {
    NormalStream rng(opt.seed, stream_for("thm2-sym", k));
    const int n = uniform_int(rng, 2, 8);
    const int r = uniform_int(rng, 1, n - 1);
    SpectrumOptions so;
    so.symmetric = true;
    const Matrix a0 = random_gapped_matrix(n, r, rng, so);
    const Matrix a = symmetrize(a0);
    auto witness = [&] {
      Witness w;
      w.matrices = {{"A", a}};
      return w;
    };
    tally.guarded("symmetric beta", [&] {
      const AttractionEstimate est = attraction_beta(ordered_schur(a, r));
      const double dev = est.beta ? std::abs(*est.beta - 1.0) : HUGE_VAL;
      tally.bound(dev, 1e-15, "|beta - 1|", witness);
    }, witness);
  }
  {
    Matrix a(2, 2);
    a << 2.0, 2.0, 0.0, 0.0;
    auto witness = [&] {
      Witness w;
      w.matrices = {{"A", a}};
      return w;
    };
    tally.guarded("beta for [[2,2],[0,0]]", [&] {
      const AttractionEstimate est = attraction_beta(ordered_schur(a, 1));
      const double dev = est.beta ? std::abs(*est.beta - 0.5) : HUGE_VAL;
      tally.bound(dev, 1e-12, "|beta - 1/2|", witness);
    }, witness);
  }
  for (int k = 0; k < opt.systems; ++k) {
    NormalStream rng(opt.seed, stream_for("thm2", k));
    const int n = uniform_int(rng, 3, 10);
    const int r = uniform_int(rng, 1, n - 1);
    Matrix a;
    SchurData schur;
    AttractionEstimate est;
    for (int attempt = 0;; ++attempt) {
      a = random_gapped_matrix(n, r, rng);
      schur = ordered_schur(a, r);
      est = attraction_beta(schur);
      if (est.gap_ok || attempt >= 50) break;
    }
    if (!est.gap_ok) continue;
    const StiefelFrame dominant = stable_equilibrium(a, r);
    for (double fraction : {0.95, 0.5 * rng.uniform()}) {
      const StiefelFrame u0 = tilted_frame(dominant, fraction * *est.beta, rng);
      auto witness = [&] {
        Witness w;
        w.matrices = {{"A", a}, {"U0", u0.matrix()}};
        w.scalars = {{"beta", *est.beta}, {"fraction", fraction}};
        return w;
      };
      tally.guarded("attraction certificate", [&] {
        tally.expect(in_attraction_domain(schur, est, u0).inside, "U0 outside V_beta", witness);
        const OjaTrajectory traj = integrate(a, u0);
        tally.expect(traj.converged, "trajectory from V_beta did not converge", witness);
        tally.bound(max_principal_angle(traj.final().matrix(), dominant.matrix()),
                    "angle to dominant subspace", witness);
      }, witness);
    }
  }
}

void suite_rank(SuiteResult& res, const VerifyOptions& opt) {
  Tally tally(res, opt, 1.0);
  std::vector<LtiSystem> systems{diagonal_system({2, 1, -1, -2}), diagonal_system({2, 1, -1}),
                                 diagonal_system({0.5, -1, -3}), diagonal_system({-1, -2, -3}),
                                 diagonal_system({3, 2, 1, -1, -4})};
  for (int k = 0; k < opt.systems / 2; ++k) {
    NormalStream rng(opt.seed, stream_for("rank", k));
    const int n = uniform_int(rng, 3, 8);
    SpectrumOptions so;
    so.shift = 0.0;
    so.complex_fraction = 0.0;
    const int split = uniform_int(rng, 1, n - 1);
    systems.push_back(random_system(random_gapped_matrix(n, split, rng, so), rng));
  }
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const LtiSystem& sys = systems[s];
    const int n = static_cast<int>(sys.n());
    const CVector ev = sorted_eigenvalues(sys.a);
    const int unstable = count_unstable(ev);
    for (int r = 1; r <= n - 1; ++r) {
      if (!spectral_gap_ok(ev, r)) continue;
      auto witness = [&] { return system_witness(label_of("system", static_cast<int>(s)), sys, r); };
      tally.guarded("rank dichotomy", [&] {
        const RankConditionReport rep = rank_condition_report(sys, r);
        tally.expect(rep.bounded == (r >= unstable), "bounded verdict does not flip at r = r'", witness);
      }, witness);
    }
  }
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"prop3", "prop4", "prop5", "prop6", "prop7",
                                              "prop8", "thm1",  "thm2",  "rank"};
  return names;
}

std::string suite_description(const std::string& name) {
  if (name == "prop3") return "eigenvalues retained by the equilibrium families";
  if (name == "prop4") return "global convergence of the (2,1) flow on a 360-angle grid";
  if (name == "prop5") return "observability passes to the reduced triple";
  if (name == "prop6") return "controllability passes to the reduced triple";
  if (name == "prop7") return "lifted steady state independent of the frame rotation";
  if (name == "prop8") return "closed-loop spectrum of the low-rank filter";
  if (name == "thm1") return "only the dominant family is stable";
  if (name == "thm2") return "convergence from the certified attraction domain";
  if (name == "rank") return "bounded error covariance iff r >= r'";
  throw ConfigError("unknown suite '" + name + "'");
}

SuiteResult run_suite(const std::string& name, const VerifyOptions& options) {
  SuiteResult res;
  res.name = name;
  res.description = suite_description(name);
  if (name == "prop3") suite_prop3(res, options);
  else if (name == "prop4") suite_prop4(res, options);
  else if (name == "prop5")
    pbh_transfer(res, options, "prop5", [](const ReducedSystem& red, double tol) {
      return pbh_observable(red.a_u, red.c_u, tol);
    });
  else if (name == "prop6")
    pbh_transfer(res, options, "prop6", [](const ReducedSystem& red, double tol) {
      return pbh_controllable(red.a_u, red.g_u, tol);
    });
  else if (name == "prop7") suite_prop7(res, options);
  else if (name == "prop8") suite_prop8(res, options);
  else if (name == "thm1") suite_thm1(res, options);
  else if (name == "thm2") suite_thm2(res, options);
  else if (name == "rank") suite_rank(res, options);
  return res;
}

}  // namespace lrkb
