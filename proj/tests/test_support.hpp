#pragma once

// Shared oracles and instance generators for the test suites. Everything
// here is deliberately brute force and structurally independent of the
// library's production code paths, so agreement is evidence rather than
// tautology. The only shared layer is the simplex solver itself, which the
// LP suite cross-checks against vertex enumeration before the other suites
// lean on it as an oracle component.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dro/drolab.hpp"

namespace testsupport {

using dro::Box;
using dro::Mat;
using dro::Vec;

// ---------------------------------------------------------------------------
// Dense Gaussian elimination for the vertex oracle
// ---------------------------------------------------------------------------

inline bool solve_square(Mat a, Vec b, Vec& y) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-10) return false;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  y.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) y[r] = b[r] / a[r][r];
  return true;
}

// ---------------------------------------------------------------------------
// Vertex-enumeration LP oracle (<= 3 variables, finite box required)
// ---------------------------------------------------------------------------

struct VertexLpResult {
  bool feasible = false;
  double value = 0.0;
  Vec point;
};

// Every vertex of a bounded polyhedron is the intersection of n linearly
// independent active constraints, and a bounded feasible LP attains its
// optimum at a vertex, so enumerating all n-subsets of constraint rows
// (inequalities, equalities, and both bound sides) is a complete search.
inline VertexLpResult vertex_lp_oracle(const dro::LinearProgram& lp) {
  const std::size_t n = lp.num_vars();
  Mat rows;   // treated as a . y (=|<=) b; equalities are also feasibility-checked
  Vec rhs;
  std::vector<bool> is_eq;
  for (std::size_t i = 0; i < lp.inequality_lhs.size(); ++i) {
    rows.push_back(lp.inequality_lhs[i]);
    rhs.push_back(lp.inequality_rhs[i]);
    is_eq.push_back(false);
  }
  for (std::size_t i = 0; i < lp.equality_lhs.size(); ++i) {
    rows.push_back(lp.equality_lhs[i]);
    rhs.push_back(lp.equality_rhs[i]);
    is_eq.push_back(true);
  }
  for (std::size_t j = 0; j < n; ++j) {
    Vec lo(n, 0.0), up(n, 0.0);
    lo[j] = -1.0;  // -y_j <= -lower
    up[j] = 1.0;   //  y_j <= upper
    rows.push_back(lo);
    rhs.push_back(-lp.lower_bounds[j]);
    is_eq.push_back(false);
    rows.push_back(up);
    rhs.push_back(lp.upper_bounds[j]);
    is_eq.push_back(false);
  }

  const auto feasible_at = [&](const Vec& y) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double act = 0.0;
      for (std::size_t j = 0; j < n; ++j) act += rows[i][j] * y[j];
      if (is_eq[i] ? std::abs(act - rhs[i]) > 1e-7 : act > rhs[i] + 1e-7) return false;
    }
    return true;
  };

  VertexLpResult best;
  std::vector<std::size_t> pick(n, 0);
  const std::size_t total = rows.size();
  const auto consider = [&]() {
    Mat a(n, Vec(n, 0.0));
    Vec b(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      a[r] = rows[pick[r]];
      b[r] = rhs[pick[r]];
    }
    Vec y;
    if (!solve_square(a, b, y) || !feasible_at(y)) return;
    double v = 0.0;
    for (std::size_t j = 0; j < n; ++j) v += lp.objective[j] * y[j];
    if (!best.feasible || v < best.value) {
      best.feasible = true;
      best.value = v;
      best.point = y;
    }
  };
  // Lexicographic enumeration of all n-subsets of rows.
  if (n == 1) {
    for (pick[0] = 0; pick[0] < total; ++pick[0]) consider();
  } else if (n == 2) {
    for (pick[0] = 0; pick[0] < total; ++pick[0])
      for (pick[1] = pick[0] + 1; pick[1] < total; ++pick[1]) consider();
  } else {
    for (pick[0] = 0; pick[0] < total; ++pick[0])
      for (pick[1] = pick[0] + 1; pick[1] < total; ++pick[1])
        for (pick[2] = pick[1] + 1; pick[2] < total; ++pick[2]) consider();
  }
  return best;
}

// ---------------------------------------------------------------------------
// Fractional-knapsack LP oracle for the worst-case safe probability
// ---------------------------------------------------------------------------

// Largest probability mass the adversary can push into the unsafe region:
//   max sum_i w_i y_i   s.t.  sum_i w_i d_i y_i <= budget,  0 <= y_i <= 1,
// with atoms of infinite distance excluded (they can never be corrupted).
// This is the transport problem restricted to "move atom i to its nearest
// unsafe point", which is optimal because any other destination costs more
// for the same corrupted mass.
inline double knapsack_corrupted_mass_oracle(const Vec& weights, const Vec& distances,
                                             double budget) {
  std::vector<std::size_t> finite;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (std::isfinite(distances[i])) finite.push_back(i);
  if (finite.empty()) return 0.0;

  dro::LinearProgram lp = dro::make_lp(finite.size());
  Vec row(finite.size(), 0.0);
  for (std::size_t j = 0; j < finite.size(); ++j) {
    lp.objective[j] = -weights[finite[j]];  // maximize
    lp.lower_bounds[j] = 0.0;
    lp.upper_bounds[j] = 1.0;
    row[j] = weights[finite[j]] * distances[finite[j]];
  }
  lp.inequality_lhs.push_back(row);
  lp.inequality_rhs.push_back(budget);
  const dro::LpSolution sol = dro::solve_lp(lp);
  if (sol.status != dro::LpStatus::Optimal)
    throw std::runtime_error("knapsack oracle LP failed");
  return -sol.value;
}

// ---------------------------------------------------------------------------
// Measure-LP oracle for the worst-case CVaR (sup-inf order)
// ---------------------------------------------------------------------------

// Brute force over distributions supported on a finite grid: choose a
// transport plan pi[i][j] from the empirical atoms to grid points subject to
// the budget, and maximize the CVaR of the transported distribution. For a
// finite distribution CVaR_alpha(Y) = min over candidate thresholds y0 of
//   y0 + alpha^-1 E[(Y - y0)_+],
// with the minimum attained at an atom value, so introducing one epigraph
// variable z with a row per grid threshold makes the whole sup-inf a single
// LP. When the grid contains every empirical atom and both support
// endpoints it also contains the support of an optimal adversary (each
// piece's penalized supremum sits at an atom or a box edge), so the value
// equals the continuous one.
inline double supinf_cvar_oracle(const dro::ProblemSpec& problem,
                                 const dro::AmbiguitySet& ambiguity, const Vec& x,
                                 const Vec& grid) {
  const std::size_t N = ambiguity.center.size();
  const std::size_t G = grid.size();
  Vec y(G);
  for (std::size_t j = 0; j < G; ++j) y[j] = problem.f_value(x, {grid[j]});

  // Variables: pi[i][j] row-major, then z.
  const std::size_t z_ix = N * G;
  dro::LinearProgram lp = dro::make_lp(N * G + 1);
  for (std::size_t v = 0; v < N * G; ++v) lp.lower_bounds[v] = 0.0;
  lp.objective[z_ix] = -1.0;  // maximize z

  for (std::size_t i = 0; i < N; ++i) {
    Vec row(lp.num_vars(), 0.0);
    for (std::size_t j = 0; j < G; ++j) row[i * G + j] = 1.0;
    lp.equality_lhs.push_back(std::move(row));
    lp.equality_rhs.push_back(ambiguity.center.weights[i]);
  }
  Vec budget_row(lp.num_vars(), 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < G; ++j)
      budget_row[i * G + j] = std::abs(grid[j] - ambiguity.center.points[i][0]);
  lp.inequality_lhs.push_back(std::move(budget_row));
  lp.inequality_rhs.push_back(ambiguity.radius);

  // z <= y0 + alpha^-1 sum pi[i][j] (y_j - y0)_+ for every threshold y0.
  for (std::size_t j0 = 0; j0 < G; ++j0) {
    Vec row(lp.num_vars(), 0.0);
    row[z_ix] = 1.0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < G; ++j)
        row[i * G + j] = -std::max(y[j] - y[j0], 0.0) / problem.alpha;
    lp.inequality_lhs.push_back(std::move(row));
    lp.inequality_rhs.push_back(y[j0]);
  }

  const dro::LpSolution sol = dro::solve_lp(lp);
  if (sol.status != dro::LpStatus::Optimal)
    throw std::runtime_error("sup-inf oracle LP failed");
  return -sol.value;
}

// ---------------------------------------------------------------------------
// Random instance generators
// ---------------------------------------------------------------------------

inline double uniform_in(dro::CounterRng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.next_double();
}

// A random piecewise-bi-affine problem with bounded coefficients and a
// decision box around the origin. Offsets are shifted so that the box
// midpoint x0 satisfies sup_xi F(x0, xi) <= -0.3: then x0 is strictly
// feasible for every radius (no distribution on the support can push any
// piece above -0.3), which keeps random solves away from the infeasible
// edge cases tested separately.
inline dro::ProblemSpec random_problem(dro::CounterRng& rng, std::size_t n, std::size_t m,
                                       std::size_t pieces) {
  dro::ProblemSpec p;
  p.objective.resize(n);
  for (auto& c : p.objective) c = uniform_in(rng, -1.0, 1.0);
  p.x_lower.assign(n, 0.0);
  p.x_upper.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    p.x_lower[j] = uniform_in(rng, -2.0, -0.5);
    p.x_upper[j] = p.x_lower[j] + uniform_in(rng, 1.0, 3.0);
  }
  p.support.lo.assign(m, 0.0);
  p.support.hi.assign(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    p.support.lo[r] = uniform_in(rng, -1.5, 0.0);
    p.support.hi[r] = p.support.lo[r] + uniform_in(rng, 0.5, 2.5);
  }
  p.alpha = uniform_in(rng, 0.1, 0.6);

  Vec x0(n);
  for (std::size_t j = 0; j < n; ++j) x0[j] = 0.5 * (p.x_lower[j] + p.x_upper[j]);

  for (std::size_t k = 0; k < pieces; ++k) {
    dro::FPiece piece;
    piece.xi_coeff.resize(m);
    for (auto& v : piece.xi_coeff) v = uniform_in(rng, -1.0, 1.0);
    piece.xi_x_coeff.assign(m, Vec(n, 0.0));
    for (auto& row : piece.xi_x_coeff)
      for (auto& v : row) v = uniform_in(rng, -1.0, 1.0);
    piece.x_coeff.resize(n);
    for (auto& v : piece.x_coeff) v = uniform_in(rng, -1.0, 1.0);
    piece.offset = uniform_in(rng, -1.0, 1.0);
    p.f_pieces.push_back(std::move(piece));
  }

  double worst = -dro::kInf;
  for (std::size_t k = 0; k < pieces; ++k) {
    const Vec g = p.piece_gradient(k, x0);
    double s = p.piece_offset(k, x0);
    for (std::size_t r = 0; r < m; ++r)
      s += std::max(g[r] * p.support.lo[r], g[r] * p.support.hi[r]);
    worst = std::max(worst, s);
  }
  for (auto& piece : p.f_pieces) piece.offset -= worst + 0.3;
  p.validate();
  return p;
}

// Random empirical distribution supported inside a box.
inline dro::EmpiricalDistribution random_empirical(dro::CounterRng& rng, std::size_t count,
                                                   const Box& box, bool equal_weights) {
  Mat points(count, Vec(box.dim(), 0.0));
  for (auto& pt : points)
    for (std::size_t r = 0; r < box.dim(); ++r)
      pt[r] = uniform_in(rng, box.lo[r], box.hi[r]);
  if (equal_weights) return dro::EmpiricalDistribution::from_samples(points);
  Vec w(count, 0.0);
  double total = 0.0;
  for (auto& v : w) {
    v = uniform_in(rng, 0.1, 1.0);
    total += v;
  }
  for (auto& v : w) v /= total;
  return {points, w};
}

inline Vec random_point_in(dro::CounterRng& rng, const Vec& lo, const Vec& hi) {
  Vec x(lo.size());
  for (std::size_t j = 0; j < lo.size(); ++j) x[j] = uniform_in(rng, lo[j], hi[j]);
  return x;
}

// The canonical single-product instance: minimize -x with the loss
// x * xi - 1 on X = [0, 10], support [0, 2].
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
  p.f_pieces.push_back(std::move(piece));
  p.validate();
  return p;
}

}  // namespace testsupport
