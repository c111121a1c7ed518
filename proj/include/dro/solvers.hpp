#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dro/chance.hpp"
#include "dro/core.hpp"
#include "dro/distributions.hpp"
#include "dro/lp.hpp"
#include "dro/problem.hpp"
#include "dro/risk.hpp"

namespace dro {

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    default: return "numerical_failure";
  }
}

struct SolveDiagnostics {
  std::string method;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // radius price (DRRCP)
  double residual = std::numeric_limits<double>::quiet_NaN();  // independent recheck
  int lp_iterations = 0;
  int cuts = 0;
  double grid_cell = std::numeric_limits<double>::quiet_NaN();  // final cell (DRCCP)
  Vec sample_epigraphs;  // per-atom s_i from the reformulation LP
  std::string note;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = std::numeric_limits<double>::quiet_NaN();
  Vec x;
  double t = std::numeric_limits<double>::quiet_NaN();  // NaN for chance programs
  SolveDiagnostics diagnostics;
};

// Absent fields (t of a chance program, lambda of a grid search) are kept as
// NaN in the structs and become explicit nulls here, so the in-memory json
// matches what lands on disk.
inline nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::json to_json(const SolveResult& r) {
  nlohmann::json d;
  d["method"] = r.diagnostics.method;
  d["lambda"] = number_or_null(r.diagnostics.lambda);
  d["residual"] = number_or_null(r.diagnostics.residual);
  d["lp_iterations"] = r.diagnostics.lp_iterations;
  d["cuts"] = r.diagnostics.cuts;
  d["grid_cell"] = number_or_null(r.diagnostics.grid_cell);
  if (!r.diagnostics.sample_epigraphs.empty())
    d["sample_epigraphs"] = r.diagnostics.sample_epigraphs;
  if (!r.diagnostics.note.empty()) d["note"] = r.diagnostics.note;
  return nlohmann::json{{"schema_version", 1},
                        {"status", to_string(r.status)},
                        {"value", number_or_null(r.value)},
                        {"x", r.x},
                        {"t", number_or_null(r.t)},
                        {"diagnostics", d}};
}

struct GridSearchConfig {
  int resolution = 33;        // points per axis, endpoints included
  int refinement_rounds = 3;  // total passes; each shrinks to +-1 cell

  void validate() const {
    require(resolution >= 2, "grid.resolution", "must be >= 2");
    require(refinement_rounds >= 1, "grid.refinement_rounds", "must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Sample-average (reference) risk-constrained program: the exact epigraph LP
//   min c.x  s.t.  F_k(x, xi_i) + t <= z_i,  sum_i w_i z_i <= alpha t,
//                  x in X, z >= 0.
// ---------------------------------------------------------------------------
inline SolveResult solve_rcp_reference(const ProblemSpec& problem,
                                       const EmpiricalDistribution& reference) {
  problem.validate();
  reference.validate();
  require(reference.dim() == problem.m(), "reference", "dimension mismatch");

  const std::size_t n = problem.n();
  const std::size_t N = reference.size();
  const std::size_t K = problem.f_pieces.size();
  const std::size_t t_ix = n;
  const std::size_t z_ix = n + 1;

  LinearProgram lp = make_lp(n + 1 + N);
  for (std::size_t j = 0; j < n; ++j) {
    lp.objective[j] = problem.objective[j];
    lp.lower_bounds[j] = problem.x_lower[j];
    lp.upper_bounds[j] = problem.x_upper[j];
  }
  for (std::size_t i = 0; i < N; ++i) lp.lower_bounds[z_ix + i] = 0.0;

  lp.inequality_lhs.reserve(N * K + 1 + problem.x_ineq_lhs.size());
  for (std::size_t i = 0; i < N; ++i) {
    const Vec& xi = reference.points[i];
    for (std::size_t k = 0; k < K; ++k) {
      const FPiece& p = problem.f_pieces[k];
      Vec row(lp.num_vars(), 0.0);
      double rhs = -p.offset;
      for (std::size_t r = 0; r < problem.m(); ++r) rhs -= p.xi_coeff[r] * xi[r];
      for (std::size_t j = 0; j < n; ++j) {
        double coef = p.x_coeff[j];
        for (std::size_t r = 0; r < p.xi_x_coeff.size(); ++r)
          coef += p.xi_x_coeff[r][j] * xi[r];
        row[j] = coef;
      }
      row[t_ix] = 1.0;
      row[z_ix + i] = -1.0;
      lp.inequality_lhs.push_back(std::move(row));
      lp.inequality_rhs.push_back(rhs);
    }
  }
  {
    Vec cvar_row(lp.num_vars(), 0.0);
    for (std::size_t i = 0; i < N; ++i) cvar_row[z_ix + i] = reference.weights[i];
    cvar_row[t_ix] = -problem.alpha;
    lp.inequality_lhs.push_back(std::move(cvar_row));
    lp.inequality_rhs.push_back(0.0);
  }
  for (std::size_t g = 0; g < problem.x_ineq_lhs.size(); ++g) {
    Vec row(lp.num_vars(), 0.0);
    for (std::size_t j = 0; j < n; ++j) row[j] = problem.x_ineq_lhs[g][j];
    lp.inequality_lhs.push_back(std::move(row));
    lp.inequality_rhs.push_back(problem.x_ineq_rhs[g]);
  }

  SolveResult out;
  out.diagnostics.method = "saa_lp";
  LpSolution sol = solve_lp(lp);
  out.diagnostics.lp_iterations = sol.iterations;
  if (sol.status == LpStatus::Infeasible) {
    out.status = SolveStatus::Infeasible;
    return out;
  }
  if (sol.status != LpStatus::Optimal) {
    out.status = SolveStatus::NumericalFailure;
    out.diagnostics.note = std::string("lp status: ") + to_string(sol.status);
    return out;
  }
  out.x.assign(sol.point.begin(), sol.point.begin() + n);
  out.t = sol.point[t_ix];
  out.value = dot(problem.objective, out.x);
  out.diagnostics.residual = evaluate_v(problem, reference, out.x, out.t);
  out.status = SolveStatus::Optimal;
  return out;
}

namespace detail {

// ----- DRRCP building blocks -----------------------------------------------

// Exact finite LP reformulation of the worst-case epigraph constraint. Per
// atom i and piece k, auxiliaries sigma_{ikr} majorize the per-coordinate
// box suprema of the lambda-penalized piece; three candidate rows (anchor,
// lower edge, upper edge) are exact because each coordinate function is
// concave piecewise linear in xi_r with a kink only at the anchor.
inline LinearProgram build_drrcp_reformulation(const ProblemSpec& problem,
                                               const AmbiguitySet& ambiguity,
                                               double lambda_cap) {
  const std::size_t n = problem.n();
  const std::size_t m = problem.m();
  const std::size_t K = problem.f_pieces.size();
  const std::size_t N = ambiguity.center.size();
  const std::size_t t_ix = n;
  const std::size_t lam_ix = n + 1;
  const std::size_t s_ix = n + 2;
  const std::size_t sig_ix = s_ix + N;  // sigma_{ikr} at sig_ix + (i*K + k)*m + r

  LinearProgram lp = make_lp(sig_ix + N * K * m);
  for (std::size_t j = 0; j < n; ++j) {
    lp.objective[j] = problem.objective[j];
    lp.lower_bounds[j] = problem.x_lower[j];
    lp.upper_bounds[j] = problem.x_upper[j];
  }
  lp.lower_bounds[lam_ix] = 0.0;
  lp.upper_bounds[lam_ix] = lambda_cap;
  // s_i >= 0 encodes the zero piece of the epigraph integrand.
  for (std::size_t i = 0; i < N; ++i) lp.lower_bounds[s_ix + i] = 0.0;

  const Box& sup = problem.support;
  for (std::size_t i = 0; i < N; ++i) {
    const Vec& anchor = ambiguity.center.points[i];
    for (std::size_t k = 0; k < K; ++k) {
      const FPiece& p = problem.f_pieces[k];
      const std::size_t sig0 = sig_ix + (i * K + k) * m;

      // s_i >= w_k.x + s_k + t + sum_r sigma_ikr
      Vec srow(lp.num_vars(), 0.0);
      for (std::size_t j = 0; j < n; ++j) srow[j] = p.x_coeff[j];
      srow[t_ix] = 1.0;
      srow[s_ix + i] = -1.0;
      for (std::size_t r = 0; r < m; ++r) srow[sig0 + r] = 1.0;
      lp.inequality_lhs.push_back(std::move(srow));
      lp.inequality_rhs.push_back(-p.offset);

      for (std::size_t r = 0; r < m; ++r) {
        const Vec* urow = p.xi_x_coeff.empty() ? nullptr : &p.xi_x_coeff[r];
        const auto candidate = [&](double at, double penalty) {
          Vec row(lp.num_vars(), 0.0);
          if (urow)
            for (std::size_t j = 0; j < n; ++j) row[j] = (*urow)[j] * at;
          row[lam_ix] = -penalty;
          row[sig0 + r] = -1.0;
          lp.inequality_lhs.push_back(std::move(row));
          lp.inequality_rhs.push_back(-p.xi_coeff[r] * at);
        };
        candidate(anchor[r], 0.0);
        candidate(sup.lo[r], anchor[r] - sup.lo[r]);
        candidate(sup.hi[r], sup.hi[r] - anchor[r]);
      }
    }
  }

  // theta * lambda + sum_i w_i s_i <= alpha * t
  Vec agg(lp.num_vars(), 0.0);
  agg[lam_ix] = ambiguity.radius;
  for (std::size_t i = 0; i < N; ++i) agg[s_ix + i] = ambiguity.center.weights[i];
  agg[t_ix] = -problem.alpha;
  lp.inequality_lhs.push_back(std::move(agg));
  lp.inequality_rhs.push_back(0.0);

  for (std::size_t g = 0; g < problem.x_ineq_lhs.size(); ++g) {
    Vec row(lp.num_vars(), 0.0);
    for (std::size_t j = 0; j < n; ++j) row[j] = problem.x_ineq_lhs[g][j];
    lp.inequality_lhs.push_back(std::move(row));
    lp.inequality_rhs.push_back(problem.x_ineq_rhs[g]);
  }
  return lp;
}

// Closed-form evaluation of vhat(x, t) together with supporting-plane data in
// (x, t). The inner box suprema separate per coordinate, where the penalized
// piece is concave piecewise linear with maximizers among {anchor, lo, hi};
// that makes the per-lambda dual objective exact, and golden-section over the
// convex lambda |-> g(lambda) on [0, L_x] does the outer minimization. The
// supporting plane is built from an explicit budget-feasible transport plan
// at the optimal lambda rather than from dual active sets, so it stays a
// global minorant of vhat even at kinks of the dual majorant.
class VhatEvaluator {
 public:
  VhatEvaluator(const ProblemSpec& problem, const AmbiguitySet& ambiguity)
      : pr_(problem), amb_(ambiguity) {}

  double value(const Vec& x, double t, Vec* grad_x, double* grad_t, double* lambda_out,
               double* support_value = nullptr) const {
    const std::size_t K = pr_.f_pieces.size();
    std::vector<Vec> grads(K);
    Vec offs(K);
    double lmax = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      grads[k] = pr_.piece_gradient(k, x);
      offs[k] = pr_.piece_offset(k, x) + t;
      lmax = std::max(lmax, linf_norm(grads[k]));
    }

    const auto g = [&](double lambda) { return dual_value(grads, offs, lambda); };
    double best_l = 0.0;
    double best_v = g(0.0);
    const auto consider = [&](double lambda) {
      const double v = g(lambda);
      if (v < best_v) {
        best_v = v;
        best_l = lambda;
      }
    };
    if (lmax > 0.0) {
      consider(lmax);
      constexpr double inv_phi = 0.6180339887498949;
      double a = 0.0, b = lmax;
      double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
      double f1 = g(x1), f2 = g(x2);
      if (f1 < best_v) {
        best_v = f1;
        best_l = x1;
      }
      if (f2 < best_v) {
        best_v = f2;
        best_l = x2;
      }
      const double tol = 1e-11 * (1.0 + lmax);
      while (b - a > tol) {
        if (f1 <= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - inv_phi * (b - a);
          f1 = g(x1);
          if (f1 < best_v) {
            best_v = f1;
            best_l = x1;
          }
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + inv_phi * (b - a);
          f2 = g(x2);
          if (f2 < best_v) {
            best_v = f2;
            best_l = x2;
          }
        }
      }
    }
    if (lambda_out) *lambda_out = best_l;
    if (grad_x || grad_t || support_value) {
      const double planned = plan_subgradient(grads, offs, best_l, grad_x, grad_t);
      if (support_value) *support_value = planned - t * pr_.alpha;
    }
    return best_v - t * pr_.alpha;
  }

 private:
  static double coord_sup(double a, double anchor, double lambda, double lo, double hi) {
    const double at = a * anchor;
    const double low = a * lo - lambda * (anchor - lo);
    const double high = a * hi - lambda * (hi - anchor);
    return std::max(at, std::max(low, high));
  }

  double dual_value(const std::vector<Vec>& grads, const Vec& offs, double lambda) const {
    const std::size_t m = pr_.m();
    double total = lambda * amb_.radius;
    for (std::size_t i = 0; i < amb_.center.size(); ++i) {
      const double w = amb_.center.weights[i];
      if (w == 0.0) continue;
      const Vec& anchor = amb_.center.points[i];
      double sup = 0.0;  // zero piece
      for (std::size_t k = 0; k < grads.size(); ++k) {
        double s = offs[k];
        for (std::size_t r = 0; r < m; ++r)
          s += coord_sup(grads[k][r], anchor[r], lambda, pr_.support.lo[r],
                         pr_.support.hi[r]);
        sup = std::max(sup, s);
      }
      total += w * sup;
    }
    return total;
  }

  // Builds an explicit transport plan certifying the dual value at the chosen
  // lambda and differentiates through it. Every atom is placed on argmax
  // candidates of its penalized supremum; where ties leave a choice between a
  // cheap and an expensive placement, atoms are split fractionally so the
  // total transport cost matches the budget without ever exceeding it. The
  // plan's expected epigraph loss is then a true minorant of vhat in (x, t)
  // (the plan stays feasible when x or t move), so the supporting plane built
  // from it is a valid cut even at points where the dual majorant is kinked.
  // Returns the plan's expected loss (before the -t * alpha shift).
  double plan_subgradient(const std::vector<Vec>& grads, const Vec& offs, double lambda,
                          Vec* grad_x, double* grad_t) const {
    const std::size_t n = pr_.n();
    const std::size_t m = pr_.m();
    const std::size_t K = grads.size();
    const std::size_t N = amb_.center.size();

    struct Choice {
      double dist = 0.0;
      std::size_t piece = 0;  // == K means: leave the atom at its anchor
      Vec point;
    };
    std::vector<Choice> cheap(N), costly(N);

    for (std::size_t i = 0; i < N; ++i) {
      const Vec& anchor = amb_.center.points[i];
      double sup = 0.0;  // zero piece: value 0 at transport cost 0
      Choice cmin{0.0, K, anchor}, cmax{0.0, K, anchor};
      for (std::size_t k = 0; k < K; ++k) {
        double pen = offs[k], dlo = 0.0, dhi = 0.0;
        Vec plo(m), phi(m);
        for (std::size_t r = 0; r < m; ++r) {
          const double a = grads[k][r];
          const double lo = pr_.support.lo[r], hi = pr_.support.hi[r];
          const double at = a * anchor[r];
          const double low = a * lo - lambda * (anchor[r] - lo);
          const double high = a * hi - lambda * (hi - anchor[r]);
          const double best = std::max(at, std::max(low, high));
          const double ctol = 1e-9 * (1.0 + std::abs(best));
          double dmin = kInf, dmax = -kInf, pmin = anchor[r], pmax = anchor[r];
          const auto tied = [&](double val, double cand, double dist) {
            if (val < best - ctol) return;
            if (dist < dmin) {
              dmin = dist;
              pmin = cand;
            }
            if (dist > dmax) {
              dmax = dist;
              pmax = cand;
            }
          };
          tied(at, anchor[r], 0.0);
          tied(low, lo, anchor[r] - lo);
          tied(high, hi, hi - anchor[r]);
          pen += best;
          dlo += dmin;
          plo[r] = pmin;
          dhi += dmax;
          phi[r] = pmax;
        }
        const double ptol = 1e-9 * (1.0 + std::abs(pen) + std::abs(sup));
        if (pen > sup + ptol) {
          sup = pen;
          cmin = Choice{dlo, k, plo};
          cmax = Choice{dhi, k, phi};
        } else if (pen >= sup - ptol) {
          sup = std::max(sup, pen);
          if (dlo < cmin.dist) cmin = Choice{dlo, k, plo};
          if (dhi > cmax.dist) cmax = Choice{dhi, k, phi};
        }
      }
      cheap[i] = std::move(cmin);
      costly[i] = std::move(cmax);
    }

    // Match the transport budget: start from the cheapest tied placements and
    // shift mass toward the expensive ones until the budget is spent. At the
    // exact dual minimizer complementary slackness guarantees the budget lies
    // between the cheap and the costly totals; the clamps below keep the plan
    // feasible under inexact lambda.
    double cost = 0.0;
    for (std::size_t i = 0; i < N; ++i) cost += amb_.center.weights[i] * cheap[i].dist;
    Vec mix(N, 0.0);
    double excess = amb_.radius - cost;
    if (excess > 0.0) {
      for (std::size_t i = 0; i < N && excess > 0.0; ++i) {
        const double span = amb_.center.weights[i] * (costly[i].dist - cheap[i].dist);
        if (span <= 0.0) continue;
        const double take = std::min(excess, span);
        mix[i] = take / span;
        excess -= take;
      }
    } else if (excess < 0.0) {
      for (std::size_t i = 0; i < N && excess < 0.0; ++i) {
        if (cheap[i].dist <= 0.0) continue;
        excess += amb_.center.weights[i] * cheap[i].dist;
        cheap[i] = Choice{0.0, K, amb_.center.points[i]};
      }
    }

    // Evaluate the true epigraph loss at each placement (re-deriving the
    // active piece there) and accumulate the plan's value and gradient.
    Vec gx(n, 0.0);
    double gt = -pr_.alpha;
    double expected = 0.0;
    const auto add = [&](const Vec& anchor, double w, const Choice& c) {
      if (w <= 0.0) return;
      const Vec& pt = c.piece == K ? anchor : c.point;
      double best = 0.0;  // zero piece of the epigraph integrand
      std::size_t kbest = K;
      for (std::size_t k = 0; k < K; ++k) {
        double raw = offs[k];
        for (std::size_t r = 0; r < m; ++r) raw += grads[k][r] * pt[r];
        if (raw > best) {
          best = raw;
          kbest = k;
        }
      }
      expected += w * best;
      if (kbest == K) return;
      const FPiece& p = pr_.f_pieces[kbest];
      for (std::size_t j = 0; j < n; ++j) {
        double c_j = p.x_coeff[j];
        for (std::size_t r = 0; r < p.xi_x_coeff.size(); ++r)
          c_j += p.xi_x_coeff[r][j] * pt[r];
        gx[j] += w * c_j;
      }
      gt += w;
    };
    for (std::size_t i = 0; i < N; ++i) {
      const double w = amb_.center.weights[i];
      if (w == 0.0) continue;
      add(amb_.center.points[i], w * (1.0 - mix[i]), cheap[i]);
      add(amb_.center.points[i], w * mix[i], costly[i]);
    }
    if (grad_x) *grad_x = std::move(gx);
    if (grad_t) *grad_t = gt;
    return expected;
  }

  const ProblemSpec& pr_;
  const AmbiguitySet& amb_;
};

// Conservative global bracket for the epigraph variable: F(x, xi) over X x Xi
// lies within [fmin, fmax] computed from per-coordinate gradient ranges, and
// the optimal t of the inner minimization lies in [-fmax, -fmin].
inline std::pair<double, double> global_t_bracket(const ProblemSpec& problem) {
  double fmax = -kInf, fmin = -kInf;
  for (std::size_t k = 0; k < problem.f_pieces.size(); ++k) {
    const FPiece& p = problem.f_pieces[k];
    LinearProgram base = problem.domain_lp();
    base.objective = p.x_coeff;
    LpSolution off_min = solve_lp(base);
    for (double& c : base.objective) c = -c;
    LpSolution off_max = solve_lp(base);
    require(off_min.status == LpStatus::Optimal && off_max.status == LpStatus::Optimal,
            "problem", "offset range LP failed (is X nonempty?)");
    double reach = 0.0;
    for (std::size_t r = 0; r < problem.m(); ++r) {
      LinearProgram lp = problem.domain_lp();
      lp.objective = p.xi_x_coeff.empty() ? Vec(problem.n(), 0.0) : p.xi_x_coeff[r];
      LpSolution down = solve_lp(lp);
      for (double& c : lp.objective) c = -c;
      LpSolution up = solve_lp(lp);
      require(down.status == LpStatus::Optimal && up.status == LpStatus::Optimal, "problem",
              "gradient range LP failed");
      const double amax =
          std::max(std::abs(p.xi_coeff[r] + down.value), std::abs(p.xi_coeff[r] - up.value));
      reach += amax * std::max(std::abs(problem.support.lo[r]), std::abs(problem.support.hi[r]));
    }
    fmax = std::max(fmax, -off_max.value + p.offset + reach);
    fmin = std::max(fmin, off_min.value + p.offset - reach);
  }
  return {fmin, fmax};
}

}  // namespace detail

struct DrrcpOptions {
  // Largest reformulation LP (rows) solved monolithically; larger instances
  // switch to the cutting-plane path.
  std::size_t reformulation_row_cap = 520;
  int max_cuts = 400;
  double cut_feasibility_tol = 1e-9;
  // LP-based audit of the returned point is exact below this sample size; for
  // larger N the audit checks feasibility at the solver's lambda only.
  std::size_t full_audit_max_atoms = 2000;
};

// Distributionally robust risk-constrained program over a W1 ball. Small
// instances solve the exact dual reformulation LP; large ones run a
// supporting-hyperplane (outer approximation) loop on the convex constraint
// vhat(x, t) <= 0, whose cuts come from the closed-form dual evaluation.
// Both paths finish with an LP-based recheck of the risk constraint that is
// independent of the optimization path taken.
inline SolveResult solve_drrcp(const ProblemSpec& problem, const AmbiguitySet& ambiguity,
                               const DrrcpOptions& options = {}) {
  problem.validate();
  ambiguity.validate();
  require(ambiguity.center.dim() == problem.m(), "ambiguity", "dimension mismatch");
  for (std::size_t i = 0; i < ambiguity.center.size(); ++i)
    require(problem.support.contains(ambiguity.center.points[i], kFeasTol), "ambiguity",
            "center atom " + std::to_string(i) + " lies outside the support");

  const std::size_t n = problem.n();
  const std::size_t m = problem.m();
  const std::size_t K = problem.f_pieces.size();
  const std::size_t N = ambiguity.center.size();
  const double L = lipschitz_constant(problem);

  SolveResult out;
  const std::size_t reformulation_rows =
      N * K * (3 * m + 1) + 1 + problem.x_ineq_lhs.size();

  if (reformulation_rows <= options.reformulation_row_cap) {
    out.diagnostics.method = "reformulation_lp";
    LinearProgram lp =
        detail::build_drrcp_reformulation(problem, ambiguity, 2.0 * (L + 1.0));
    LpSolution sol = solve_lp(lp);
    out.diagnostics.lp_iterations = sol.iterations;
    if (sol.status == LpStatus::Infeasible) {
      out.status = SolveStatus::Infeasible;
      return out;
    }
    if (sol.status != LpStatus::Optimal) {
      out.status = SolveStatus::NumericalFailure;
      out.diagnostics.note = std::string("lp status: ") + to_string(sol.status);
      return out;
    }
    out.x.assign(sol.point.begin(), sol.point.begin() + n);
    out.t = sol.point[n];
    out.diagnostics.lambda = sol.point[n + 1];
    out.diagnostics.sample_epigraphs.assign(sol.point.begin() + n + 2,
                                            sol.point.begin() + n + 2 + N);
    out.value = dot(problem.objective, out.x);
    out.status = SolveStatus::Optimal;
  } else {
    out.diagnostics.method = "cutting_plane";
    const auto [fmin, fmax] = detail::global_t_bracket(problem);
    LinearProgram master = make_lp(n + 1);
    for (std::size_t j = 0; j < n; ++j) {
      master.objective[j] = problem.objective[j];
      master.lower_bounds[j] = problem.x_lower[j];
      master.upper_bounds[j] = problem.x_upper[j];
    }
    master.lower_bounds[n] = -fmax - 1.0;
    master.upper_bounds[n] = -fmin + 1.0;
    for (std::size_t g = 0; g < problem.x_ineq_lhs.size(); ++g) {
      Vec row = problem.x_ineq_lhs[g];
      row.push_back(0.0);
      master.inequality_lhs.push_back(std::move(row));
      master.inequality_rhs.push_back(problem.x_ineq_rhs[g]);
    }

    detail::VhatEvaluator eval(problem, ambiguity);
    bool converged = false;
    for (int cut = 0; cut < options.max_cuts; ++cut) {
      LpSolution sol = solve_lp(master);
      out.diagnostics.lp_iterations += sol.iterations;
      if (sol.status == LpStatus::Infeasible) {
        // Cuts only relax the true constraint, so an empty master proves
        // the program infeasible.
        out.status = SolveStatus::Infeasible;
        out.diagnostics.cuts = cut;
        return out;
      }
      if (sol.status != LpStatus::Optimal) {
        out.status = SolveStatus::NumericalFailure;
        out.diagnostics.note = std::string("master lp status: ") + to_string(sol.status);
        out.diagnostics.cuts = cut;
        return out;
      }
      Vec x(sol.point.begin(), sol.point.begin() + n);
      const double t = sol.point[n];
      Vec gx;
      double gt = 0.0, lambda = 0.0, supported = 0.0;
      const double v = eval.value(x, t, &gx, &gt, &lambda, &supported);
      if (v <= options.cut_feasibility_tol) {
        out.x = std::move(x);
        out.t = t;
        out.diagnostics.lambda = lambda;
        out.diagnostics.cuts = cut;
        out.value = dot(problem.objective, out.x);
        out.status = SolveStatus::Optimal;
        converged = true;
        break;
      }
      // The transport plan's supporting plane minorizes vhat everywhere, so
      // requiring supported + gx.(x' - x) + gt (t' - t) <= 0 never cuts off a
      // feasible point (the exact dual value v is used only for termination).
      Vec row = gx;
      row.push_back(gt);
      double rhs = -supported + dot(gx, x) + gt * t;
      master.inequality_lhs.push_back(std::move(row));
      master.inequality_rhs.push_back(rhs);
    }
    if (!converged) {
      out.status = SolveStatus::NumericalFailure;
      out.diagnostics.note = "cutting-plane loop did not converge";
      out.diagnostics.cuts = options.max_cuts;
      return out;
    }
  }

  // Independent LP-based audit of the worst-case constraint at the returned
  // point. Small centers get the full dual search; large ones a feasibility
  // certificate at the solver's lambda, which upper-bounds vhat.
  double audit;
  if (N <= options.full_audit_max_atoms) {
    audit = evaluate_vhat(problem, ambiguity, out.x, out.t);
  } else {
    const PiecewiseAffineLoss loss = epigraph_loss(problem, out.x, out.t);
    const double lam = std::max(0.0, out.diagnostics.lambda);
    double total = lam * ambiguity.radius;
    for (std::size_t i = 0; i < N; ++i) {
      const double w = ambiguity.center.weights[i];
      if (w == 0.0) continue;
      double sup = -kInf;
      for (const auto& piece : loss.pieces)
        sup = std::max(sup, detail::penalized_piece_sup(piece, lam, ambiguity.center.points[i],
                                                        problem.support));
      total += w * sup;
    }
    audit = total - out.t * problem.alpha;
  }
  out.diagnostics.residual = audit;
  if (audit > 1e-6 * (1.0 + std::abs(out.value))) {
    out.status = SolveStatus::NumericalFailure;
    out.diagnostics.note = "risk constraint audit failed: vhat = " + format_double(audit);
  }
  return out;
}

// Distributionally robust chance-constrained program by refined grid search
// over X (n <= 3). Every round scans a uniform grid, keeps the best feasible
// point (smallest objective, then lexicographically smallest), and the next
// round shrinks the box to one cell around the incumbent. The reported value
// is attained by a feasible grid point, so it upper-bounds the true optimum
// by at most the objective variation over the final cell.
inline SolveResult solve_drccp(const ProblemSpec& problem, const AmbiguitySet& ambiguity,
                               const GridSearchConfig& grid = {}) {
  problem.validate();
  ambiguity.validate();
  grid.validate();
  require(ambiguity.center.dim() == problem.m(), "ambiguity", "dimension mismatch");
  require(problem.n() <= 3, "problem", "grid search supports n <= 3");

  const std::size_t n = problem.n();
  const double need = 1.0 - problem.alpha - 1e-12;
  const Box ranges = decision_ranges(problem);

  SolveResult out;
  out.diagnostics.method = "grid_search";
  Box box = ranges;
  bool have_best = false;
  Vec best_x;
  double best_val = kInf;

  for (int round = 0; round < grid.refinement_rounds; ++round) {
    const int res = grid.resolution;
    std::vector<int> idx(n, 0);
    const auto point_of = [&](const std::vector<int>& ix) {
      Vec x(n);
      for (std::size_t j = 0; j < n; ++j)
        x[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * ix[j] / (res - 1);
      return x;
    };
    bool found_this_round = false;
    while (true) {
      const Vec x = point_of(idx);
      if (problem.x_in_domain(x, 1e-9)) {
        const double val = dot(problem.objective, x);
        // Strictly better objective, or a tie broken lexicographically.
        const bool candidate =
            !have_best || val < best_val ||
            (val == best_val && std::lexicographical_compare(x.begin(), x.end(),
                                                             best_x.begin(), best_x.end()));
        if (candidate) {
          const double safe = worst_case_prob_safe({problem, x}, ambiguity);
          if (safe >= need) {
            best_x = x;
            best_val = val;
            have_best = true;
            found_this_round = true;
          }
        }
      }
      std::size_t j = 0;
      while (j < n && ++idx[j] == res) idx[j++] = 0;
      if (j == n) break;
    }
    (void)found_this_round;
    if (!have_best) {
      out.status = SolveStatus::Infeasible;
      out.diagnostics.note = "no feasible point on a resolution-" + std::to_string(res) +
                             " grid over X (grid-level certificate)";
      return out;
    }
    // Shrink to +-1 cell around the incumbent.
    double cell_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double cell = (box.hi[j] - box.lo[j]) / (res - 1);
      cell_max = std::max(cell_max, cell);
      box.lo[j] = std::max(ranges.lo[j], best_x[j] - cell);
      box.hi[j] = std::min(ranges.hi[j], best_x[j] + cell);
    }
    out.diagnostics.grid_cell = cell_max;
  }

  out.x = best_x;
  out.value = best_val;
  out.status = SolveStatus::Optimal;
  out.diagnostics.residual =
      (1.0 - problem.alpha) - worst_case_prob_safe({problem, best_x}, ambiguity);
  return out;
}

// Sample-average chance-constrained program: the radius-zero special case.
inline SolveResult solve_ccp_reference(const ProblemSpec& problem,
                                       const EmpiricalDistribution& reference,
                                       const GridSearchConfig& grid = {}) {
  AmbiguitySet degenerate;
  degenerate.center = reference;
  degenerate.radius = 0.0;
  SolveResult out = solve_drccp(problem, degenerate, grid);
  out.diagnostics.method = "grid_search_saa";
  return out;
}

// Slater-style diagnostic: the smallest achievable worst-case constraint peak
//   min_{x in X} max_k sup_{xi in Xi} F_k(x, xi),
// as an LP with per-piece per-coordinate envelope variables. A negative value
// certifies a decision that is strictly feasible against every distribution
// on the support; consistency experiments warn when it is nonnegative.
inline double strict_feasibility_margin(const ProblemSpec& problem) {
  problem.validate();
  const std::size_t n = problem.n();
  const std::size_t m = problem.m();
  const std::size_t K = problem.f_pieces.size();
  const std::size_t tau_ix = n;
  const std::size_t eta_ix = n + 1;  // eta_{kr} at eta_ix + k*m + r

  LinearProgram lp = make_lp(n + 1 + K * m);
  lp.objective[tau_ix] = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    lp.lower_bounds[j] = problem.x_lower[j];
    lp.upper_bounds[j] = problem.x_upper[j];
  }
  for (std::size_t k = 0; k < K; ++k) {
    const FPiece& p = problem.f_pieces[k];
    // sum_r eta_kr + w_k.x + s_k - tau <= 0
    Vec row(lp.num_vars(), 0.0);
    for (std::size_t j = 0; j < n; ++j) row[j] = p.x_coeff[j];
    row[tau_ix] = -1.0;
    for (std::size_t r = 0; r < m; ++r) row[eta_ix + k * m + r] = 1.0;
    lp.inequality_lhs.push_back(std::move(row));
    lp.inequality_rhs.push_back(-p.offset);
    // eta_kr >= a_kr(x) * edge for both box edges
    for (std::size_t r = 0; r < m; ++r) {
      for (const double edge : {problem.support.lo[r], problem.support.hi[r]}) {
        Vec erow(lp.num_vars(), 0.0);
        if (!p.xi_x_coeff.empty())
          for (std::size_t j = 0; j < n; ++j) erow[j] = p.xi_x_coeff[r][j] * edge;
        erow[eta_ix + k * m + r] = -1.0;
        lp.inequality_lhs.push_back(std::move(erow));
        lp.inequality_rhs.push_back(-p.xi_coeff[r] * edge);
      }
    }
  }
  for (std::size_t g = 0; g < problem.x_ineq_lhs.size(); ++g) {
    Vec row(lp.num_vars(), 0.0);
    for (std::size_t j = 0; j < n; ++j) row[j] = problem.x_ineq_lhs[g][j];
    lp.inequality_lhs.push_back(std::move(row));
    lp.inequality_rhs.push_back(problem.x_ineq_rhs[g]);
  }
  LpSolution sol = solve_lp(lp);
  require(sol.status == LpStatus::Optimal, "problem",
          "strict feasibility LP failed (is X nonempty?)");
  return sol.value;
}

}  // namespace dro
