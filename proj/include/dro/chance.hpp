#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dro/core.hpp"
#include "dro/distributions.hpp"
#include "dro/lp.hpp"
#include "dro/problem.hpp"

namespace dro {

// Fixed decision viewed through the safety predicate F(x, xi) <= 0.
struct SafeSetQuery {
  const ProblemSpec& problem;
  Vec x;

  void validate() const {
    problem.validate();
    require(problem.x_in_domain(x), "x", "lies outside X beyond tolerance");
  }
};

// P(F(x, xi) <= 0) under a finite distribution; the boundary F = 0 counts as
// safe.
inline double empirical_prob_safe(const SafeSetQuery& query, const EmpiricalDistribution& dist) {
  query.validate();
  dist.validate();
  require(dist.dim() == query.problem.m(), "distribution", "dimension mismatch");
  double p = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (query.problem.f_value(query.x, dist.points[i]) <= 0.0) p += dist.weights[i];
  return p;
}

// l1 distance from `point` to the unsafe event {xi in Xi : F(x, xi) > 0}.
// The event is open, so an atom is corruptible only through a piece that is
// strictly positive somewhere in the box; the infimum distance then equals
// the distance to the closed polytope {F_k >= 0} (its relative boundary is
// approachable from the strict side by convexity). The unsafe event is the
// union over pieces, so the distance is the minimum of per-piece distances.
// Returns +inf when no piece is ever strictly positive in the box (the
// adversary cannot corrupt this atom at any budget).
inline double distance_to_unsafe(const SafeSetQuery& query, const Vec& point) {
  query.validate();
  const ProblemSpec& pr = query.problem;
  require(point.size() == pr.m(), "point", "dimension mismatch");
  require(pr.support.contains(point, kFeasTol), "point", "lies outside the support");

  double best = kInf;
  for (std::size_t k = 0; k < pr.f_pieces.size(); ++k) {
    const Vec a = pr.piece_gradient(k, query.x);
    const double b = pr.piece_offset(k, query.x);
    if (linf_norm(a) <= 1e-12) {
      // Flat piece: strictly unsafe everywhere or nowhere.
      if (b > 0.0) return 0.0;
      continue;
    }
    const std::size_t m = pr.m();
    double box_sup = b;
    for (std::size_t r = 0; r < m; ++r)
      box_sup += std::max(a[r] * pr.support.lo[r], a[r] * pr.support.hi[r]);
    if (box_sup <= 0.0) continue;  // piece never strictly positive in the box

    if (m == 1) {
      // One-dimensional closed form: the unsafe half-line clipped to the box
      // starts at -b/a (from above for a > 0, from below for a < 0).
      const double threshold = -b / a[0];
      const double d =
          a[0] > 0.0 ? std::max(0.0, threshold - point[0]) : std::max(0.0, point[0] - threshold);
      best = std::min(best, d);
      continue;
    }
    LinearProgram lp = make_lp(2 * m);
    for (std::size_t r = 0; r < m; ++r) {
      lp.objective[m + r] = 1.0;  // min sum u_r
      lp.lower_bounds[r] = pr.support.lo[r];
      lp.upper_bounds[r] = pr.support.hi[r];
      lp.lower_bounds[m + r] = 0.0;
      Vec row1(2 * m, 0.0), row2(2 * m, 0.0);
      row1[r] = 1.0;
      row1[m + r] = -1.0;  // xi_r - u_r <= point_r
      row2[r] = -1.0;
      row2[m + r] = -1.0;  // -xi_r - u_r <= -point_r
      lp.inequality_lhs.push_back(std::move(row1));
      lp.inequality_rhs.push_back(point[r]);
      lp.inequality_lhs.push_back(std::move(row2));
      lp.inequality_rhs.push_back(-point[r]);
    }
    Vec reach(2 * m, 0.0);
    for (std::size_t r = 0; r < m; ++r) reach[r] = -a[r];  // a . xi >= -b
    lp.inequality_lhs.push_back(std::move(reach));
    lp.inequality_rhs.push_back(b);

    LpSolution sol = solve_lp(lp);
    require(sol.status == LpStatus::Optimal, "distance_to_unsafe", "distance LP failed");
    best = std::min(best, std::max(0.0, sol.value));
  }
  return best;
}

// Smallest safe probability over the W1 ball around the empirical center.
// The adversary corrupts atoms in increasing order of their distance to the
// unsafe set, splitting one atom fractionally when the budget runs out; this
// greedy allocation solves the underlying knapsack LP exactly. Atoms with
// +inf distance can never be corrupted. At radius zero the empirical value
// is returned unchanged (atoms exactly on the boundary stay safe there,
// while any positive radius lets the adversary claim them for free).
inline double worst_case_prob_safe(const SafeSetQuery& query, const AmbiguitySet& ambiguity) {
  query.validate();
  ambiguity.validate();
  require(ambiguity.center.dim() == query.problem.m(), "ambiguity", "dimension mismatch");
  const double base = empirical_prob_safe(query, ambiguity.center);
  if (ambiguity.radius == 0.0) return base;

  // Only atoms that count as safe in the baseline can lose mass; atoms that
  // are already unsafe are excluded from both the baseline and the greedy, so
  // the result stays exactly consistent with the radius-zero value. The
  // fractional atom is clamped to its own weight, which keeps the corrupted
  // mass exactly nondecreasing across budget breakpoints despite rounding.
  const EmpiricalDistribution& center = ambiguity.center;
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(center.size());
  for (std::size_t i = 0; i < center.size(); ++i)
    if (query.problem.f_value(query.x, center.points[i]) <= 0.0)
      order.emplace_back(distance_to_unsafe(query, center.points[i]), i);
  std::sort(order.begin(), order.end());

  double budget = ambiguity.radius;
  double corrupted = 0.0;
  for (const auto& [d, i] : order) {
    if (d == kInf) break;
    const double w = center.weights[i];
    const double cost = w * d;
    if (cost <= budget) {
      corrupted += w;
      budget -= cost;
    } else {
      corrupted += std::min(w, budget / d);
      break;
    }
  }
  return std::max(0.0, base - corrupted);
}

}  // namespace dro
