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

// Weighted scalar observations of a loss.
struct ScalarSample {
  Vec values;
  Vec weights;

  void validate() const {
    require(!values.empty(), "values", "at least one observation required");
    require(weights.size() == values.size(), "weights", "size mismatch");
    require(all_finite(values), "values", "must be finite");
    double total = 0.0;
    for (double w : weights) {
      require(is_finite(w) && w >= 0.0, "weights", "must be nonnegative");
      total += w;
    }
    require(std::abs(total - 1.0) <= kWeightTol * (1.0 + values.size()), "weights",
            "must sum to one");
  }
};

inline ScalarSample scalar_losses(const ProblemSpec& problem, const EmpiricalDistribution& dist,
                                  const Vec& x) {
  ScalarSample s;
  s.values.reserve(dist.size());
  for (const Vec& xi : dist.points) s.values.push_back(problem.f_value(x, xi));
  s.weights = dist.weights;
  return s;
}

// Lower alpha-quantile flavor of value-at-risk: the smallest observed value y
// with P(Y <= y) >= 1 - alpha.
inline double var_alpha(const ScalarSample& sample, double alpha) {
  sample.validate();
  require(alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0,1)");
  std::vector<std::size_t> order(sample.values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sample.values[a] < sample.values[b];
  });
  const double need = 1.0 - alpha - 1e-12;
  double cum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = sample.values[order[i]];
    // Aggregate duplicates so P(Y <= v) is evaluated at the value, not the atom.
    while (i < order.size() && sample.values[order[i]] == v) cum += sample.weights[order[i++]];
    if (cum >= need) return v;
  }
  return sample.values[order.back()];
}

// Exact CVaR of a finite sample: the objective
//   f(t) = alpha^-1 * E[(Y + t)_+] - t
// is convex piecewise linear with breakpoints at t = -y_i, so the minimum is
// attained at one of them; prefix sums over the descending sort give every
// candidate value in O(N log N).
inline double cvar_alpha(const ScalarSample& sample, double alpha) {
  sample.validate();
  require(alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0,1)");
  std::vector<std::pair<double, double>> atoms(sample.values.size());
  for (std::size_t i = 0; i < atoms.size(); ++i)
    atoms[i] = {sample.values[i], sample.weights[i]};
  std::sort(atoms.begin(), atoms.end(), std::greater<>());

  double best = kInf;
  double weight_sum = 0.0;   // W_k
  double weighted_sum = 0.0; // S_k
  for (const auto& [y, w] : atoms) {
    weight_sum += w;
    weighted_sum += w * y;
    const double f = (weighted_sum - weight_sum * y) / alpha + y;
    best = std::min(best, f);
  }
  return best;
}

// Convex piecewise affine integrand max_k (gradient_k . xi + offset_k).
struct PiecewiseAffineLoss {
  struct Piece {
    Vec gradient;
    double offset = 0.0;
  };
  std::vector<Piece> pieces;

  std::size_t dim() const { return pieces.empty() ? 0 : pieces[0].gradient.size(); }

  void validate() const {
    require(!pieces.empty(), "loss", "at least one piece required");
    const std::size_t m = pieces[0].gradient.size();
    require(m > 0, "loss", "pieces must have at least one coordinate");
    for (const Piece& p : pieces) {
      require(p.gradient.size() == m, "loss", "piece dimension mismatch");
      require(all_finite(p.gradient) && is_finite(p.offset), "loss", "non-finite piece");
    }
  }

  double evaluate(const Vec& xi) const {
    double v = -kInf;
    for (const Piece& p : pieces) v = std::max(v, dot(p.gradient, xi) + p.offset);
    return v;
  }

  // l-inf of the steepest piece; the Lipschitz constant w.r.t. the l1 ground
  // metric.
  double lipschitz() const {
    double L = 0.0;
    for (const Piece& p : pieces) L = std::max(L, linf_norm(p.gradient));
    return L;
  }
};

namespace detail {

// sup over the support box of (gradient . xi + offset - lambda * |xi - anchor|_1),
// solved as a small LP in (xi, u) with u_r >= |xi_r - anchor_r|.
inline double penalized_piece_sup(const PiecewiseAffineLoss::Piece& piece, double lambda,
                                  const Vec& anchor, const Box& support) {
  const std::size_t m = anchor.size();
  LinearProgram lp = make_lp(2 * m);
  for (std::size_t r = 0; r < m; ++r) {
    lp.objective[r] = -piece.gradient[r];  // maximize => minimize negation
    lp.objective[m + r] = lambda;
    lp.lower_bounds[r] = support.lo[r];
    lp.upper_bounds[r] = support.hi[r];
    lp.lower_bounds[m + r] = 0.0;

    Vec row1(2 * m, 0.0), row2(2 * m, 0.0);
    row1[r] = 1.0;
    row1[m + r] = -1.0;  // xi_r - u_r <= anchor_r
    row2[r] = -1.0;
    row2[m + r] = -1.0;  // -xi_r - u_r <= -anchor_r
    lp.inequality_lhs.push_back(std::move(row1));
    lp.inequality_rhs.push_back(anchor[r]);
    lp.inequality_lhs.push_back(std::move(row2));
    lp.inequality_rhs.push_back(-anchor[r]);
  }
  LpSolution sol = solve_lp(lp);
  require(sol.status == LpStatus::Optimal, "worst_case_expectation",
          "inner supremum LP failed");
  return -sol.value + piece.offset;
}

struct WceResult {
  double value = 0.0;
  double lambda = 0.0;
};

}  // namespace detail

// Worst-case expectation of a convex piecewise affine loss over the W1 ball,
// via the exact dual
//   min_{lambda >= 0} lambda * theta + sum_i w_i sup_xi [loss(xi) - lambda |xi - xi_i|_1].
// The bracket [0, 2L] always contains a minimizer: beyond L the per-atom sups
// are frozen at loss(xi_i), so the objective grows linearly in lambda. The
// dual objective is convex in lambda; golden-section plus the endpoints
// {0, L, 2L} locate the minimum, exactly so when theta = 0.
inline detail::WceResult worst_case_expectation_detail(const PiecewiseAffineLoss& loss,
                                                       const AmbiguitySet& ambiguity,
                                                       const Box& support) {
  loss.validate();
  ambiguity.validate();
  support.validate("support");
  require(loss.dim() == support.dim(), "loss", "dimension mismatch with support");
  require(ambiguity.center.dim() == support.dim(), "ambiguity", "dimension mismatch");
  for (std::size_t i = 0; i < ambiguity.center.size(); ++i)
    require(support.contains(ambiguity.center.points[i], kFeasTol), "ambiguity",
            "center atom " + std::to_string(i) + " lies outside the support");

  const double theta = ambiguity.radius;
  const double L = loss.lipschitz();

  const auto dual_value = [&](double lambda) {
    double total = lambda * theta;
    for (std::size_t i = 0; i < ambiguity.center.size(); ++i) {
      const double w = ambiguity.center.weights[i];
      if (w == 0.0) continue;
      double sup = -kInf;
      for (const auto& piece : loss.pieces)
        sup = std::max(sup,
                       detail::penalized_piece_sup(piece, lambda, ambiguity.center.points[i],
                                                   support));
      total += w * sup;
    }
    return total;
  };

  detail::WceResult best{kInf, 0.0};
  const auto consider = [&](double lambda) {
    const double v = dual_value(lambda);
    if (v < best.value) best = {v, lambda};
  };
  consider(0.0);
  if (L > 0.0) {
    consider(L);
    consider(2.0 * L);
    // Golden-section on [0, 2L].
    constexpr double inv_phi = 0.6180339887498949;
    double a = 0.0, b = 2.0 * L;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = dual_value(x1), f2 = dual_value(x2);
    if (f1 < best.value) best = {f1, x1};
    if (f2 < best.value) best = {f2, x2};
    const double tol = 1e-10 * (1.0 + 2.0 * L);
    while (b - a > tol) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - inv_phi * (b - a);
        f1 = dual_value(x1);
        if (f1 < best.value) best = {f1, x1};
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + inv_phi * (b - a);
        f2 = dual_value(x2);
        if (f2 < best.value) best = {f2, x2};
      }
    }
  }
  return best;
}

inline double worst_case_expectation(const PiecewiseAffineLoss& loss,
                                     const AmbiguitySet& ambiguity, const Box& support) {
  return worst_case_expectation_detail(loss, ambiguity, support).value;
}

// Integrand of the epigraph constraint at (x, t): max(F(x, .) + t, 0) as a
// piecewise affine loss (the constant -t*alpha is kept outside).
inline PiecewiseAffineLoss epigraph_loss(const ProblemSpec& problem, const Vec& x, double t) {
  PiecewiseAffineLoss loss;
  for (std::size_t k = 0; k < problem.f_pieces.size(); ++k)
    loss.pieces.push_back({problem.piece_gradient(k, x), problem.piece_offset(k, x) + t});
  loss.pieces.push_back({Vec(problem.m(), 0.0), 0.0});
  return loss;
}

// Sample-average value of the epigraph integrand:
//   v(x, t) = E_P[max(F(x, xi) + t, 0)] - t * alpha.
inline double evaluate_v(const ProblemSpec& problem, const EmpiricalDistribution& reference,
                         const Vec& x, double t) {
  problem.validate();
  reference.validate();
  require(reference.dim() == problem.m(), "reference", "dimension mismatch");
  require(problem.x_in_domain(x), "x", "lies outside X beyond tolerance");
  require(is_finite(t), "t", "must be finite");
  double e = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i)
    e += reference.weights[i] * std::max(problem.f_value(x, reference.points[i]) + t, 0.0);
  return e - t * problem.alpha;
}

// Worst-case counterpart of evaluate_v over the ambiguity ball. A radius-0
// ball is exactly {center}, so that case delegates to the sample average and
// the reduction to evaluate_v holds to the last bit, not just to solver
// tolerance.
inline double evaluate_vhat(const ProblemSpec& problem, const AmbiguitySet& ambiguity,
                            const Vec& x, double t) {
  problem.validate();
  ambiguity.validate();
  require(problem.x_in_domain(x), "x", "lies outside X beyond tolerance");
  require(is_finite(t), "t", "must be finite");
  if (ambiguity.radius == 0.0) return evaluate_v(problem, ambiguity.center, x, t);
  const PiecewiseAffineLoss loss = epigraph_loss(problem, x, t);
  return worst_case_expectation(loss, ambiguity, problem.support) - t * problem.alpha;
}

namespace detail {

// Range of F(x, .) over the support at fixed x, bounded piece by piece with
// tiny LPs over the box. The lower end uses max_k inf F_k <= inf max_k F_k,
// a valid lower bound on the minimum of F.
inline std::pair<double, double> f_range_at(const ProblemSpec& problem, const Vec& x) {
  double fmax = -kInf, fmin = -kInf;
  for (std::size_t k = 0; k < problem.f_pieces.size(); ++k) {
    const Vec a = problem.piece_gradient(k, x);
    const double off = problem.piece_offset(k, x);
    LinearProgram lp = make_lp(problem.m());
    lp.lower_bounds = problem.support.lo;
    lp.upper_bounds = problem.support.hi;
    for (std::size_t r = 0; r < problem.m(); ++r) lp.objective[r] = -a[r];
    LpSolution up = solve_lp(lp);
    for (std::size_t r = 0; r < problem.m(); ++r) lp.objective[r] = a[r];
    LpSolution down = solve_lp(lp);
    require(up.status == LpStatus::Optimal && down.status == LpStatus::Optimal, "support",
            "piece range LP failed");
    fmax = std::max(fmax, -up.value + off);
    fmin = std::max(fmin, down.value + off);
  }
  return {fmin, fmax};
}

}  // namespace detail

// Worst-case CVaR at a fixed decision:
//   sup_{Q in ball} CVaR_alpha(F(x, xi)) = inf_t alpha^-1 * vhat(x, t),
// computed by golden-section over t. The minimizer lies in
// [-F_max, -F_min + 1] because every distribution in the ball is supported on
// the box, where F(x, .) ranges within [F_min, F_max].
inline double worst_case_cvar_value(const ProblemSpec& problem, const AmbiguitySet& ambiguity,
                                    const Vec& x) {
  problem.validate();
  ambiguity.validate();
  require(problem.x_in_domain(x), "x", "lies outside X beyond tolerance");

  const auto [fmin, fmax] = detail::f_range_at(problem, x);
  const auto h = [&](double t) { return evaluate_vhat(problem, ambiguity, x, t); };

  double a = -fmax, b = -fmin + 1.0;
  double best = std::min(h(a), h(b));
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = h(x1), f2 = h(x2);
  best = std::min({best, f1, f2});
  const double tol = 1e-9 * (1.0 + std::abs(b - a));
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = h(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = h(x2);
    }
    best = std::min({best, f1, f2});
  }
  return best / problem.alpha;
}

// Uniform Lipschitz constant of F in xi over X (l-inf of gradients, dual to
// the l1 ground metric): for every piece and coordinate, the extreme values
// of u_kr + U_k[r] . x over X are found with two LPs.
inline double lipschitz_constant(const ProblemSpec& problem) {
  problem.validate();
  double L = 0.0;
  for (std::size_t k = 0; k < problem.f_pieces.size(); ++k) {
    const FPiece& p = problem.f_pieces[k];
    for (std::size_t r = 0; r < problem.m(); ++r) {
      const Vec row = p.xi_x_coeff.empty() ? Vec(problem.n(), 0.0) : p.xi_x_coeff[r];
      LinearProgram lp = problem.domain_lp();
      lp.objective = row;
      LpSolution down = solve_lp(lp);
      for (double& c : lp.objective) c = -c;
      LpSolution up = solve_lp(lp);
      require(down.status == LpStatus::Optimal && up.status == LpStatus::Optimal, "problem",
              "gradient range LP failed (is X nonempty?)");
      L = std::max(L, std::abs(p.xi_coeff[r] + down.value));
      L = std::max(L, std::abs(p.xi_coeff[r] - up.value));
    }
  }
  return L;
}

}  // namespace dro
