#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <dro/drolab.hpp>

namespace drolab_cli {

// Compiling with -DDROLAB_SELFTEST_FAULT shifts one expected constant, which
// must make the selftest exit nonzero; the test suite builds that variant to
// prove the selftest can actually detect a regression.
#ifdef DROLAB_SELFTEST_FAULT
inline constexpr double kFaultShift = 1e-3;
#else
inline constexpr double kFaultShift = 0.0;
#endif

namespace selftest_detail {

struct Suite {
  const char* name;
  int passed = 0;
  int failed = 0;

  explicit Suite(const char* n) : name(n) {}

  void check(bool ok, const std::string& what) {
    if (ok) {
      ++passed;
    } else {
      ++failed;
      std::fprintf(stderr, "  FAILED [%s]: %s\n", name, what.c_str());
    }
  }

  void close(const std::string& what, double got, double want, double tol) {
    check(std::isfinite(got) && std::abs(got - want) <= tol,
          what + ": got " + dro::format_double(got) + ", want " + dro::format_double(want) +
              " +- " + dro::format_double(tol));
  }

  int report() const {
    std::printf("%-12s %d/%d passed\n", name, passed, passed + failed);
    return failed;
  }
};

inline dro::EmpiricalDistribution random_empirical(dro::CounterRng& rng, std::size_t max_atoms) {
  const std::size_t n = 1 + rng.next_u64() % max_atoms;
  dro::Mat points;
  for (std::size_t i = 0; i < n; ++i) points.push_back({rng.next_double()});
  return dro::EmpiricalDistribution::from_samples(std::move(points));
}

// Canonical single-piece instance: minimize -x over x in [0, 10] with
// constraint function x * xi - 1 on the box [0, 2].
inline dro::ProblemSpec canonical_problem(double alpha) {
  dro::ProblemSpec p;
  p.objective = {-1.0};
  p.x_lower = {0.0};
  p.x_upper = {10.0};
  p.alpha = alpha;
  p.support.lo = {0.0};
  p.support.hi = {2.0};
  dro::FPiece piece;
  piece.xi_coeff = {0.0};
  piece.xi_x_coeff = {{1.0}};
  piece.x_coeff = {0.0};
  piece.offset = -1.0;
  p.f_pieces = {piece};
  return p;
}

inline int transport_suite() {
  using namespace dro;
  Suite s("transport");

  EmpiricalDistribution a = EmpiricalDistribution::from_samples({{0.0}, {1.0}});
  EmpiricalDistribution b = EmpiricalDistribution::from_samples({{1.0}, {3.0}});
  s.close("two-atom pair", wasserstein1_1d(a, b), 1.5 + kFaultShift, 1e-12);

  EmpiricalDistribution d0 = EmpiricalDistribution::from_samples({{0.0, 0.0}});
  EmpiricalDistribution d34 = EmpiricalDistribution::from_samples({{3.0, 4.0}});
  s.close("point masses l1", wasserstein1(d0, d34), 7.0, 1e-9);

  CounterRng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const EmpiricalDistribution mu = random_empirical(rng, 5);
    const EmpiricalDistribution nu = random_empirical(rng, 5);
    const EmpiricalDistribution rho = random_empirical(rng, 5);
    const double ab = wasserstein1_1d(mu, nu);
    s.close("1d vs transport LP", ab, wasserstein1(mu, nu), 1e-9);
    s.close("identity of indiscernibles", wasserstein1_1d(mu, mu), 0.0, 1e-12);
    s.close("symmetry", wasserstein1_1d(nu, mu), ab, 1e-12);
    s.check(ab <= wasserstein1_1d(mu, rho) + wasserstein1_1d(rho, nu) + 1e-12,
            "triangle inequality");
  }
  return s.report();
}

inline int cvar_suite() {
  using namespace dro;
  Suite s("cvar");

  ScalarSample y{{1.0, 2.0, 3.0, 4.0}, {0.25, 0.25, 0.25, 0.25}};
  s.close("half-tail mean", cvar_alpha(y, 0.5), 3.5, 1e-12);
  s.close("half-tail quantile", var_alpha(y, 0.5), 2.0, 1e-12);
  s.close("quarter-tail quantile", var_alpha(y, 0.25), 3.0, 1e-12);
  s.check(cvar_alpha(y, 0.25) >= var_alpha(y, 0.25) - 1e-12, "cvar dominates var");

  ScalarSample point{{0.7}, {1.0}};
  s.close("point mass cvar", cvar_alpha(point, 0.3), 0.7, 1e-12);
  s.close("wide tail approaches mean", cvar_alpha(y, 0.999999), 2.5, 1e-4);
  return s.report();
}

inline int reduction_suite() {
  using namespace dro;
  Suite s("reductions");

  const ProblemSpec problem = canonical_problem(0.1);
  const EmpiricalDistribution data =
      discretize(DistributionModel::uniform_box({{0.0}, {2.0}}), 20);

  const SolveResult reference = solve_rcp_reference(problem, data);
  s.check(reference.status == SolveStatus::Optimal, "reference solve optimal");
  s.close("tail-mean optimum", reference.value, -1.0 / 1.9, 1e-9);

  AmbiguitySet zero;
  zero.center = data;
  zero.radius = 0.0;
  const SolveResult robust = solve_drrcp(problem, zero);
  s.check(robust.status == SolveStatus::Optimal, "radius-zero solve optimal");
  s.close("radius-zero reduction", robust.value, reference.value, 1e-7);

  const double v = evaluate_v(problem, data, {0.4}, -0.2);
  const double vhat = evaluate_vhat(problem, zero, {0.4}, -0.2);
  s.close("radius-zero integrand", vhat, v, 1e-9);
  return s.report();
}

inline int chance_suite() {
  using namespace dro;
  Suite s("chance");

  const ProblemSpec problem = canonical_problem(0.1);
  const SafeSetQuery query{problem, {1.0}};
  s.close("distance to unsafe", distance_to_unsafe(query, {0.5}), 0.5, 1e-12);

  AmbiguitySet ball;
  ball.center = EmpiricalDistribution::from_samples({{0.5}, {1.5}});
  ball.radius = 0.2;
  s.close("empirical safe probability", empirical_prob_safe(query, ball.center), 0.5, 1e-12);
  // Atom at 1.5 is already unsafe; 0.2 of budget corrupts 0.4 of the
  // remaining atom's mass at distance 0.5.
  s.close("greedy worst case", worst_case_prob_safe(query, ball), 0.1, 1e-12);

  CounterRng rng(97);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t atoms = 2 + rng.next_u64() % 4;
    Mat pts;
    for (std::size_t i = 0; i < atoms; ++i) pts.push_back({2.0 * rng.next_double()});
    AmbiguitySet amb;
    amb.center = EmpiricalDistribution::from_samples(std::move(pts));
    amb.radius = 0.3 * rng.next_double();
    const Vec x = {0.6 + rng.next_double()};
    const SafeSetQuery q{problem, x};
    // Knapsack LP over per-atom corruption fractions, same distances.
    LinearProgram lp = make_lp(atoms);
    Vec cost(atoms, 0.0);
    for (std::size_t i = 0; i < atoms; ++i) {
      const double d = distance_to_unsafe(q, amb.center.points[i]);
      lp.objective[i] = -amb.center.weights[i];
      lp.lower_bounds[i] = 0.0;
      lp.upper_bounds[i] = 1.0;
      if (d == kInf) {
        lp.upper_bounds[i] = 0.0;
        continue;
      }
      cost[i] = amb.center.weights[i] * d;
    }
    lp.inequality_lhs.push_back(cost);
    lp.inequality_rhs.push_back(amb.radius);
    const LpSolution sol = solve_lp(lp);
    s.check(sol.status == LpStatus::Optimal, "knapsack oracle solvable");
    s.close("greedy equals knapsack LP", worst_case_prob_safe(q, amb), 1.0 + sol.value, 1e-9);
  }
  return s.report();
}

inline int lp_suite() {
  using namespace dro;
  Suite s("lp");

  LinearProgram lp = make_lp(2);
  lp.objective = {-1.0, -1.0};
  lp.lower_bounds = {0.0, 0.0};
  lp.upper_bounds = {1.0, 1.0};
  lp.inequality_lhs = {{1.0, 1.0}};
  lp.inequality_rhs = {1.0};
  const LpSolution box = solve_lp(lp);
  s.check(box.status == LpStatus::Optimal, "simplex solves box instance");
  s.close("box instance value", box.value, -1.0, 1e-9);

  LinearProgram bad = make_lp(1);
  bad.lower_bounds = {0.0};
  bad.inequality_lhs = {{1.0}};
  bad.inequality_rhs = {-1.0};
  s.check(solve_lp(bad).status == LpStatus::Infeasible, "detects infeasibility");

  LinearProgram ray = make_lp(1);
  ray.objective = {-1.0};
  ray.lower_bounds = {0.0};
  s.check(solve_lp(ray).status == LpStatus::Unbounded, "detects unboundedness");
  return s.report();
}

}  // namespace selftest_detail

// Fast embedded property suite: metric axioms, CVaR identities, radius-zero
// reductions, the chance greedy against a knapsack LP, and simplex basics.
// Returns the number of failed checks.
inline int run_selftest() {
  using namespace selftest_detail;
  int failed = 0;
  failed += transport_suite();
  failed += cvar_suite();
  failed += reduction_suite();
  failed += chance_suite();
  failed += lp_suite();
  if (failed == 0)
    std::printf("selftest: all suites passed\n");
  else
    std::printf("selftest: %d check(s) failed\n", failed);
  return failed;
}

}  // namespace drolab_cli
