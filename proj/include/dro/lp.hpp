#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dro/core.hpp"

namespace dro {

// Dense-input linear program in the form
//   min  objective . x
//   s.t. inequality_lhs x <= inequality_rhs
//        equality_lhs  x  = equality_rhs
//        lower_bounds <= x <= upper_bounds   (+-inf allowed, empty => free)
// All instances produced by this library are small and dense; there is no
// sparse input format.
struct LinearProgram {
  Vec objective;
  Mat inequality_lhs;
  Vec inequality_rhs;
  Mat equality_lhs;
  Vec equality_rhs;
  Vec lower_bounds;
  Vec upper_bounds;

  std::size_t num_vars() const { return objective.size(); }

  void validate() const {
    const std::size_t n = objective.size();
    require(n > 0, "objective", "at least one variable required");
    require(all_finite(objective), "objective", "coefficients must be finite");
    require(inequality_lhs.size() == inequality_rhs.size(), "inequality_rhs",
            "row count mismatch");
    require(equality_lhs.size() == equality_rhs.size(), "equality_rhs", "row count mismatch");
    for (std::size_t i = 0; i < inequality_lhs.size(); ++i) {
      require(inequality_lhs[i].size() == n, "inequality_lhs",
              "row " + std::to_string(i) + " has wrong width");
      require(all_finite(inequality_lhs[i]) && is_finite(inequality_rhs[i]), "inequality_lhs",
              "row " + std::to_string(i) + " has non-finite entries");
    }
    for (std::size_t i = 0; i < equality_lhs.size(); ++i) {
      require(equality_lhs[i].size() == n, "equality_lhs",
              "row " + std::to_string(i) + " has wrong width");
      require(all_finite(equality_lhs[i]) && is_finite(equality_rhs[i]), "equality_lhs",
              "row " + std::to_string(i) + " has non-finite entries");
    }
    require(lower_bounds.empty() || lower_bounds.size() == n, "lower_bounds", "size mismatch");
    require(upper_bounds.empty() || upper_bounds.size() == n, "upper_bounds", "size mismatch");
    for (std::size_t j = 0; j < lower_bounds.size(); ++j)
      require(!(lower_bounds[j] != lower_bounds[j]), "lower_bounds", "NaN bound");
    for (std::size_t j = 0; j < upper_bounds.size(); ++j)
      require(!(upper_bounds[j] != upper_bounds[j]), "upper_bounds", "NaN bound");
    if (!lower_bounds.empty() && !upper_bounds.empty())
      for (std::size_t j = 0; j < n; ++j)
        require(lower_bounds[j] <= upper_bounds[j], "bounds",
                "lower > upper for variable " + std::to_string(j));
  }
};

inline LinearProgram make_lp(std::size_t n) {
  LinearProgram lp;
  lp.objective.assign(n, 0.0);
  lp.lower_bounds.assign(n, -kInf);
  lp.upper_bounds.assign(n, kInf);
  return lp;
}

enum class LpStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    default: return "numerical_failure";
  }
}

struct LpSolution {
  LpStatus status = LpStatus::NumericalFailure;
  double value = 0.0;
  Vec point;
  int iterations = 0;
};

namespace detail {

// Bounded-variable two-phase primal simplex in revised form. The basis
// inverse is kept dense in column-major order so the per-iteration work
// (BTRAN, FTRAN, eta update) streams contiguous memory; constraint columns
// are stored sparse since every row of the instances we build touches only a
// handful of variables. Pricing is Dantzig with a Bland fallback once a run
// of degenerate steps is detected, which restores finite termination.
class SimplexSolver {
 public:
  explicit SimplexSolver(const LinearProgram& lp) { build(lp); }

  LpSolution run() {
    LpSolution out;
    if (rows_ == 0) return solve_unconstrained();

    if (phase1_needed_) {
      Phase outcome = iterate(/*phase1=*/true);
      if (outcome == Phase::IterationLimit) return fail(out);
      double infeas = 0.0;
      for (std::size_t i = 0; i < rows_; ++i)
        if (basic_var_[i] >= art_begin_) infeas += std::max(0.0, basic_val_[i]);
      if (infeas > kFeasTol * (1.0 + b_scale_)) {
        out.status = LpStatus::Infeasible;
        out.iterations = iterations_;
        return out;
      }
    }
    // Artificials are pinned at zero for phase 2.
    for (std::size_t j = art_begin_; j < num_cols_; ++j) upper_[j] = 0.0;

    Phase outcome = iterate(/*phase1=*/false);
    out.iterations = iterations_;
    if (outcome == Phase::IterationLimit) return fail(out);
    if (outcome == Phase::Unbounded) {
      out.status = LpStatus::Unbounded;
      return out;
    }
    return extract();
  }

 private:
  enum class Phase { Optimal, Unbounded, IterationLimit };
  enum class State : std::uint8_t { Basic, AtLower, AtUpper, FreeZero };

  void build(const LinearProgram& lp) {
    n_struct_ = lp.num_vars();
    const std::size_t n_ineq = lp.inequality_lhs.size();
    const std::size_t n_eq = lp.equality_lhs.size();
    rows_ = n_ineq + n_eq;
    slack_begin_ = n_struct_;
    art_begin_ = n_struct_ + n_ineq;
    num_cols_ = art_begin_ + rows_;

    cost_.assign(num_cols_, 0.0);
    for (std::size_t j = 0; j < n_struct_; ++j) cost_[j] = lp.objective[j];
    cost_scale_ = 1.0 + linf_norm(lp.objective);

    lower_.assign(num_cols_, 0.0);
    upper_.assign(num_cols_, kInf);
    for (std::size_t j = 0; j < n_struct_; ++j) {
      lower_[j] = lp.lower_bounds.empty() ? -kInf : lp.lower_bounds[j];
      upper_[j] = lp.upper_bounds.empty() ? kInf : lp.upper_bounds[j];
    }

    cols_.resize(num_cols_);
    b_.assign(rows_, 0.0);
    for (std::size_t i = 0; i < n_ineq; ++i) {
      b_[i] = lp.inequality_rhs[i];
      const Vec& row = lp.inequality_lhs[i];
      for (std::size_t j = 0; j < n_struct_; ++j)
        if (row[j] != 0.0) cols_[j].push_back({static_cast<int>(i), row[j]});
      cols_[slack_begin_ + i].push_back({static_cast<int>(i), 1.0});
    }
    for (std::size_t i = 0; i < n_eq; ++i) {
      const std::size_t r = n_ineq + i;
      b_[r] = lp.equality_rhs[i];
      const Vec& row = lp.equality_lhs[i];
      for (std::size_t j = 0; j < n_struct_; ++j)
        if (row[j] != 0.0) cols_[j].push_back({static_cast<int>(r), row[j]});
    }
    b_scale_ = 1.0 + linf_norm(b_);

    // Nonbasic start: every variable at its bound nearest zero.
    state_.assign(num_cols_, State::AtLower);
    value_.assign(num_cols_, 0.0);
    for (std::size_t j = 0; j < num_cols_; ++j) {
      if (lower_[j] > -kInf) {
        state_[j] = State::AtLower;
        value_[j] = lower_[j];
      } else if (upper_[j] < kInf) {
        state_[j] = State::AtUpper;
        value_[j] = upper_[j];
      } else {
        state_[j] = State::FreeZero;
        value_[j] = 0.0;
      }
    }

    // Crash basis: slacks with nonnegative residual enter directly, every
    // other row gets a signed artificial so the start is primal feasible.
    Vec residual = b_;
    for (std::size_t j = 0; j < n_struct_; ++j)
      if (value_[j] != 0.0)
        for (auto [i, v] : cols_[j]) residual[i] -= v * value_[j];

    basic_var_.assign(rows_, 0);
    basic_val_.assign(rows_, 0.0);
    phase1_needed_ = false;
    for (std::size_t i = 0; i < rows_; ++i) {
      const bool slack_row = i < n_ineq;
      if (slack_row && residual[i] >= 0.0) {
        basic_var_[i] = slack_begin_ + i;
        basic_val_[i] = residual[i];
        cols_[art_begin_ + i].push_back({static_cast<int>(i), 1.0});
        upper_[art_begin_ + i] = 0.0;  // unused artificial stays fixed
      } else {
        const double sigma = residual[i] >= 0.0 ? 1.0 : -1.0;
        cols_[art_begin_ + i].push_back({static_cast<int>(i), sigma});
        basic_var_[i] = art_begin_ + i;
        basic_val_[i] = std::abs(residual[i]);
        if (basic_val_[i] > kFeasTol * b_scale_) phase1_needed_ = true;
      }
      state_[basic_var_[i]] = State::Basic;
    }

    // Basis inverse starts as the signature matrix of the crash basis.
    binv_.assign(rows_ * rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      double diag = 1.0;
      if (basic_var_[i] >= art_begin_) diag = cols_[basic_var_[i]][0].second;
      binv_[i * rows_ + i] = diag;  // column i, row i
    }

    iteration_cap_ = 10000 + 20 * static_cast<int>(rows_ + num_cols_);
    ftran_.assign(rows_, 0.0);
    y_.assign(rows_, 0.0);
  }

  // y = c_B^T B^{-1}, exploiting that few basic variables carry cost.
  void btran(bool phase1) {
    nz_cost_rows_.clear();
    for (std::size_t i = 0; i < rows_; ++i) {
      const std::size_t v = basic_var_[i];
      const double c = phase1 ? (v >= art_begin_ ? 1.0 : 0.0) : cost_[v];
      cb_[i] = c;
      if (c != 0.0) nz_cost_rows_.push_back(i);
    }
    if (nz_cost_rows_.size() * 8 <= rows_) {
      for (std::size_t k = 0; k < rows_; ++k) {
        const double* col = &binv_[k * rows_];
        double s = 0.0;
        for (std::size_t i : nz_cost_rows_) s += cb_[i] * col[i];
        y_[k] = s;
      }
    } else {
      for (std::size_t k = 0; k < rows_; ++k) {
        const double* col = &binv_[k * rows_];
        double s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) s += cb_[i] * col[i];
        y_[k] = s;
      }
    }
  }

  double reduced_cost(std::size_t j, bool phase1) const {
    double c = phase1 ? (j >= art_begin_ ? 1.0 : 0.0) : cost_[j];
    for (auto [i, v] : cols_[j]) c -= y_[i] * v;
    return c;
  }

  Phase iterate(bool phase1) {
    cb_.assign(rows_, 0.0);
    int degenerate_streak = 0;
    bool bland = false;
    const double dual_tol = kOptTol * cost_scale_;

    while (true) {
      if (++iterations_ > iteration_cap_) return Phase::IterationLimit;
      btran(phase1);

      // Pricing.
      std::size_t enter = num_cols_;
      int direction = 0;
      double best_merit = dual_tol;
      const std::size_t scan_end = phase1 ? num_cols_ : art_begin_;
      for (std::size_t j = 0; j < scan_end; ++j) {
        if (state_[j] == State::Basic || lower_[j] == upper_[j]) continue;
        const double d = reduced_cost(j, phase1);
        int dir = 0;
        double merit = 0.0;
        if ((state_[j] == State::AtLower || state_[j] == State::FreeZero) && d < -dual_tol) {
          dir = +1;
          merit = -d;
        } else if ((state_[j] == State::AtUpper || state_[j] == State::FreeZero) &&
                   d > dual_tol) {
          dir = -1;
          merit = d;
        }
        if (dir == 0) continue;
        if (bland) {
          enter = j;
          direction = dir;
          break;
        }
        if (merit > best_merit) {
          best_merit = merit;
          enter = j;
          direction = dir;
        }
      }
      if (enter == num_cols_) return Phase::Optimal;

      // FTRAN: representation of the entering column in the current basis.
      std::fill(ftran_.begin(), ftran_.end(), 0.0);
      for (auto [i, v] : cols_[enter]) {
        const double* col = &binv_[static_cast<std::size_t>(i) * rows_];
        for (std::size_t r = 0; r < rows_; ++r) ftran_[r] += v * col[r];
      }

      // Ratio test. Moving the entering variable by step >= 0 in `direction`
      // changes basic value i at rate -direction * ftran_[i].
      constexpr double piv_zero = 1e-9;
      const auto blocking_ratio = [&](std::size_t i, double& bound) -> double {
        const double rate = direction * ftran_[i];
        const std::size_t v = basic_var_[i];
        if (rate > piv_zero && lower_[v] > -kInf) {
          bound = lower_[v];
          return std::max(0.0, (basic_val_[i] - lower_[v]) / rate);
        }
        if (rate < -piv_zero && upper_[v] < kInf) {
          bound = upper_[v];
          return std::max(0.0, (upper_[v] - basic_val_[i]) / (-rate));
        }
        return kInf;
      };

      double min_ratio = kInf;
      for (std::size_t i = 0; i < rows_; ++i) {
        double bound = 0.0;
        min_ratio = std::min(min_ratio, blocking_ratio(i, bound));
      }
      const double limit = upper_[enter] - lower_[enter];  // inf unless both finite

      if (limit <= min_ratio + 1e-10 + 1e-9 * limit && limit < kInf) {
        // The entering variable hits its opposite bound first: bound flip,
        // no basis change.
        if (limit < 1e-11) {
          if (++degenerate_streak > 50) bland = true;
        } else {
          degenerate_streak = 0;
        }
        for (std::size_t i = 0; i < rows_; ++i)
          basic_val_[i] -= limit * direction * ftran_[i];
        state_[enter] = direction > 0 ? State::AtUpper : State::AtLower;
        value_[enter] = direction > 0 ? upper_[enter] : lower_[enter];
        continue;
      }
      if (min_ratio >= kInf) {
        return phase1 ? Phase::IterationLimit : Phase::Unbounded;
      }

      // Among blocking rows within a tight window of the minimum ratio,
      // prefer the largest pivot magnitude (stability); under Bland, the
      // smallest leaving variable index (finite termination).
      const double window = min_ratio + 1e-10 + 1e-9 * min_ratio;
      std::size_t leave = rows_;
      double leave_bound = 0.0;
      double theta = min_ratio;
      double best_piv = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) {
        double bound = 0.0;
        const double t = blocking_ratio(i, bound);
        if (t > window) continue;
        const bool better = bland
                                ? (leave == rows_ || basic_var_[i] < basic_var_[leave])
                                : std::abs(ftran_[i]) > best_piv;
        if (better) {
          best_piv = std::abs(ftran_[i]);
          leave = i;
          leave_bound = bound;
          theta = t;
        }
      }

      if (theta < 1e-11) {
        if (++degenerate_streak > 50) bland = true;
      } else {
        degenerate_streak = 0;
        bland = false;
      }

      // Basis change.
      const double entering_value = value_[enter] + direction * theta;
      for (std::size_t i = 0; i < rows_; ++i)
        basic_val_[i] -= theta * direction * ftran_[i];
      const std::size_t leaving_var = basic_var_[leave];
      state_[leaving_var] = leave_bound == lower_[leaving_var] ? State::AtLower : State::AtUpper;
      value_[leaving_var] = leave_bound;

      basic_var_[leave] = enter;
      basic_val_[leave] = entering_value;
      state_[enter] = State::Basic;

      // Eta update of the column-major basis inverse.
      const double pivot = ftran_[leave];
      for (std::size_t c = 0; c < rows_; ++c) {
        double* col = &binv_[c * rows_];
        const double mv = col[leave];
        if (mv == 0.0) continue;
        const double f = mv / pivot;
        for (std::size_t r = 0; r < rows_; ++r) col[r] -= f * ftran_[r];
        col[leave] = f;
      }
    }
  }

  LpSolution solve_unconstrained() {
    LpSolution out;
    out.point.assign(n_struct_, 0.0);
    for (std::size_t j = 0; j < n_struct_; ++j) {
      if (cost_[j] > 0.0) {
        if (lower_[j] <= -kInf) {
          out.status = LpStatus::Unbounded;
          return out;
        }
        out.point[j] = lower_[j];
      } else if (cost_[j] < 0.0) {
        if (upper_[j] >= kInf) {
          out.status = LpStatus::Unbounded;
          return out;
        }
        out.point[j] = upper_[j];
      } else {
        out.point[j] = value_[j];
      }
      out.value += cost_[j] * out.point[j];
    }
    out.status = LpStatus::Optimal;
    return out;
  }

  LpSolution fail(LpSolution out) const {
    out.status = LpStatus::NumericalFailure;
    out.iterations = iterations_;
    return out;
  }

  LpSolution extract() {
    LpSolution out;
    out.iterations = iterations_;
    Vec full = value_;
    for (std::size_t i = 0; i < rows_; ++i) full[basic_var_[i]] = basic_val_[i];

    // Independent feasibility audit; the basis inverse is never trusted.
    double resid = residual_linf(full);
    for (std::size_t j = 0; j < num_cols_; ++j) {
      if (lower_[j] > -kInf) resid = std::max(resid, lower_[j] - full[j]);
      if (upper_[j] < kInf) resid = std::max(resid, full[j] - upper_[j]);
    }
    if (resid > 1e2 * kFeasTol * b_scale_) {
      out.status = LpStatus::NumericalFailure;
      return out;
    }

    out.point.assign(full.begin(), full.begin() + n_struct_);
    out.value = 0.0;
    for (std::size_t j = 0; j < n_struct_; ++j) out.value += cost_[j] * out.point[j];
    out.status = LpStatus::Optimal;
    return out;
  }

  double residual_linf(const Vec& full) const {
    Vec ax(rows_, 0.0);
    for (std::size_t j = 0; j < num_cols_; ++j) {
      const double v = full[j];
      if (v == 0.0) continue;
      for (auto [i, val] : cols_[j]) ax[i] += val * v;
    }
    // Inequality rows carry their slack inside `full`, so every row is an
    // equality here.
    double r = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) r = std::max(r, std::abs(ax[i] - b_[i]));
    return r;
  }

  std::size_t n_struct_ = 0;
  std::size_t rows_ = 0;
  std::size_t slack_begin_ = 0;
  std::size_t art_begin_ = 0;
  std::size_t num_cols_ = 0;
  bool phase1_needed_ = false;

  std::vector<std::vector<std::pair<int, double>>> cols_;
  Vec cost_, lower_, upper_, b_;
  double b_scale_ = 1.0;
  double cost_scale_ = 1.0;

  std::vector<State> state_;
  Vec value_;
  std::vector<std::size_t> basic_var_;
  Vec basic_val_;
  Vec binv_;  // column-major rows_ x rows_
  Vec ftran_, y_, cb_;
  std::vector<std::size_t> nz_cost_rows_;

  int iterations_ = 0;
  int iteration_cap_ = 0;
};

}  // namespace detail

inline LpSolution solve_lp(const LinearProgram& lp) {
  lp.validate();
  detail::SimplexSolver solver(lp);
  return solver.run();
}

// Optimal transport between finite weighted point sets, posed as the flow LP
//   min sum_ij cost[i][j] * plan[i][j]
//   s.t. row sums = source, column sums = target, plan >= 0.
struct TransportResult {
  LpStatus status = LpStatus::NumericalFailure;
  double cost = 0.0;
  Mat plan;
  int iterations = 0;
};

inline TransportResult solve_transport(const Vec& source, const Vec& target, const Mat& cost) {
  const std::size_t n1 = source.size();
  const std::size_t n2 = target.size();
  require(n1 > 0 && n2 > 0, "marginals", "must be nonempty");
  require(cost.size() == n1, "cost", "row count must match source size");
  for (std::size_t i = 0; i < n1; ++i) {
    require(cost[i].size() == n2, "cost", "column count must match target size");
    for (double c : cost[i]) require(is_finite(c) && c >= 0.0, "cost", "entries must be >= 0");
  }
  double mass1 = 0.0, mass2 = 0.0;
  for (double w : source) {
    require(w >= 0.0, "source", "weights must be nonnegative");
    mass1 += w;
  }
  for (double w : target) {
    require(w >= 0.0, "target", "weights must be nonnegative");
    mass2 += w;
  }
  require(std::abs(mass1 - mass2) <= kWeightTol * (1.0 + mass1), "marginals",
          "total masses differ beyond 1e-12");

  LinearProgram lp = make_lp(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      lp.objective[i * n2 + j] = cost[i][j];
      lp.lower_bounds[i * n2 + j] = 0.0;
    }
  lp.equality_lhs.assign(n1 + n2, Vec(n1 * n2, 0.0));
  lp.equality_rhs.assign(n1 + n2, 0.0);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) lp.equality_lhs[i][i * n2 + j] = 1.0;
    lp.equality_rhs[i] = source[i];
  }
  for (std::size_t j = 0; j < n2; ++j) {
    for (std::size_t i = 0; i < n1; ++i) lp.equality_lhs[n1 + j][i * n2 + j] = 1.0;
    lp.equality_rhs[n1 + j] = target[j];
  }

  TransportResult result;
  LpSolution sol = solve_lp(lp);
  result.status = sol.status;
  result.iterations = sol.iterations;
  if (sol.status != LpStatus::Optimal) return result;

  result.cost = sol.value;
  result.plan.assign(n1, Vec(n2, 0.0));
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      result.plan[i][j] = std::max(0.0, sol.point[i * n2 + j]);

  // Marginal audit at the documented tolerance.
  for (std::size_t i = 0; i < n1; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n2; ++j) s += result.plan[i][j];
    if (std::abs(s - source[i]) > 1e-9 * (1.0 + mass1)) {
      result.status = LpStatus::NumericalFailure;
      return result;
    }
  }
  for (std::size_t j = 0; j < n2; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n1; ++i) s += result.plan[i][j];
    if (std::abs(s - target[j]) > 1e-9 * (1.0 + mass2)) {
      result.status = LpStatus::NumericalFailure;
      return result;
    }
  }
  return result;
}

}  // namespace dro
