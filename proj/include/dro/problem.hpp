#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dro/core.hpp"
#include "dro/lp.hpp"

namespace dro {

// One affine piece of the constraint function:
//   F_k(x, xi) = (xi_coeff + xi_x_coeff * x) . xi + x_coeff . x + offset,
// so F(x, xi) = max_k F_k(x, xi) is convex in x for each xi and convex
// piecewise affine in xi for each x.
struct FPiece {
  Vec xi_coeff;    // u_k, length m
  Mat xi_x_coeff;  // U_k, m rows of length n
  Vec x_coeff;     // w_k, length n
  double offset = 0.0;
};

// Data of the risk- or chance-constrained program: minimize objective over
// the polyhedron X = {G x <= h} intersected with finite variable bounds,
// subject to a risk/chance constraint on F(x, xi) over the support box.
struct ProblemSpec {
  Vec objective;  // c
  Mat x_ineq_lhs; // G (may be empty)
  Vec x_ineq_rhs; // h
  Vec x_lower;    // finite
  Vec x_upper;    // finite
  std::vector<FPiece> f_pieces;
  double alpha = 0.1;
  Box support;    // Xi

  std::size_t n() const { return objective.size(); }
  std::size_t m() const { return support.dim(); }

  void validate() const {
    require(!objective.empty(), "objective", "need at least one decision variable");
    require(all_finite(objective), "objective", "must be finite");
    const std::size_t nv = n();
    require(x_ineq_lhs.size() == x_ineq_rhs.size(), "x_ineq_rhs", "row count mismatch");
    for (std::size_t i = 0; i < x_ineq_lhs.size(); ++i) {
      require(x_ineq_lhs[i].size() == nv, "x_ineq_lhs",
              "row " + std::to_string(i) + " has wrong width");
      require(all_finite(x_ineq_lhs[i]) && is_finite(x_ineq_rhs[i]), "x_ineq_lhs",
              "row " + std::to_string(i) + " is non-finite");
    }
    require(x_lower.size() == nv && x_upper.size() == nv, "x_bounds", "size mismatch");
    require(all_finite(x_lower) && all_finite(x_upper), "x_bounds",
            "decision bounds must be finite (X must be compact)");
    for (std::size_t j = 0; j < nv; ++j)
      require(x_lower[j] <= x_upper[j], "x_bounds",
              "lower > upper for variable " + std::to_string(j));
    support.validate("support");
    const std::size_t mv = m();
    require(!f_pieces.empty(), "f_pieces", "need at least one piece");
    for (std::size_t k = 0; k < f_pieces.size(); ++k) {
      const FPiece& p = f_pieces[k];
      const std::string where = "f_pieces[" + std::to_string(k) + "]";
      require(p.xi_coeff.size() == mv, where, "xi_coeff must have length m");
      require(p.x_coeff.size() == nv, where, "x_coeff must have length n");
      require(all_finite(p.xi_coeff) && all_finite(p.x_coeff) && is_finite(p.offset), where,
              "non-finite data");
      require(p.xi_x_coeff.empty() || p.xi_x_coeff.size() == mv, where,
              "xi_x_coeff must have m rows (or none)");
      for (const Vec& row : p.xi_x_coeff) {
        require(row.size() == nv, where, "xi_x_coeff rows must have length n");
        require(all_finite(row), where, "non-finite data");
      }
    }
    require(is_finite(alpha) && alpha > 0.0 && alpha < 1.0, "alpha", "must lie in (0,1)");
  }

  // Gradient of F_k in xi at decision x: u_k + U_k x.
  Vec piece_gradient(std::size_t k, const Vec& x) const {
    const FPiece& p = f_pieces[k];
    Vec g = p.xi_coeff;
    if (!p.xi_x_coeff.empty())
      for (std::size_t r = 0; r < g.size(); ++r) g[r] += dot(p.xi_x_coeff[r], x);
    return g;
  }

  // Offset of F_k at decision x: w_k . x + s_k.
  double piece_offset(std::size_t k, const Vec& x) const {
    return dot(f_pieces[k].x_coeff, x) + f_pieces[k].offset;
  }

  double piece_value(std::size_t k, const Vec& x, const Vec& xi) const {
    return dot(piece_gradient(k, x), xi) + piece_offset(k, x);
  }

  double f_value(const Vec& x, const Vec& xi) const {
    double v = -kInf;
    for (std::size_t k = 0; k < f_pieces.size(); ++k)
      v = std::max(v, piece_value(k, x, xi));
    return v;
  }

  bool x_in_domain(const Vec& x, double tol = 1e-7) const {
    if (x.size() != n()) return false;
    for (std::size_t j = 0; j < n(); ++j)
      if (x[j] < x_lower[j] - tol || x[j] > x_upper[j] + tol) return false;
    for (std::size_t i = 0; i < x_ineq_lhs.size(); ++i)
      if (dot(x_ineq_lhs[i], x) > x_ineq_rhs[i] + tol * (1.0 + std::abs(x_ineq_rhs[i])))
        return false;
    return true;
  }

  // Embeds X into a LinearProgram skeleton: bounds plus G rows, no objective.
  LinearProgram domain_lp() const {
    LinearProgram lp = make_lp(n());
    lp.lower_bounds = x_lower;
    lp.upper_bounds = x_upper;
    lp.inequality_lhs = x_ineq_lhs;
    lp.inequality_rhs = x_ineq_rhs;
    return lp;
  }
};

// Checks X for nonemptiness and returns per-coordinate ranges via 2n LPs.
inline Box decision_ranges(const ProblemSpec& problem) {
  problem.validate();
  Box ranges;
  ranges.lo.assign(problem.n(), 0.0);
  ranges.hi.assign(problem.n(), 0.0);
  for (std::size_t j = 0; j < problem.n(); ++j) {
    LinearProgram lp = problem.domain_lp();
    lp.objective[j] = 1.0;
    LpSolution lo = solve_lp(lp);
    require(lo.status != LpStatus::Infeasible, "problem", "decision set X is empty");
    require(lo.status == LpStatus::Optimal, "problem", "could not bound X");
    lp.objective[j] = -1.0;
    LpSolution hi = solve_lp(lp);
    require(hi.status == LpStatus::Optimal, "problem", "could not bound X");
    ranges.lo[j] = lo.value;
    ranges.hi[j] = -hi.value;
  }
  return ranges;
}

// ---------------------------------------------------------------------------
// Versioned text format. Layout:
//
//   drolab-problem v1
//   n 2
//   m 1
//   objective -1 0
//   alpha 0.1
//   x_lower 0 0
//   x_upper 10 10
//   support_lo 0
//   support_hi 2
//   x_row 1 1 5          # optional G rows: n coefficients then rhs
//   piece                # repeatable
//     xi_coeff 0
//     xi_x_row 1 0       # row of U_k; given m times or omitted for zeros
//     x_coeff 0 0
//     offset -1
//   end
//
// '#' starts a comment; blank lines are ignored.
// ---------------------------------------------------------------------------

namespace detail {

struct LineReader {
  std::istream& is;
  int lineno = 0;

  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      tokens.clear();
      std::stringstream ss(line);
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw validation_error("config", "line " + std::to_string(lineno) + ": " + message);
  }

  double number(const std::string& tok) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail("bad number '" + tok + "'");
      return v;
    } catch (const validation_error&) {
      throw;
    } catch (...) {
      fail("bad number '" + tok + "'");
    }
  }

  Vec numbers(const std::vector<std::string>& tokens, std::size_t from,
              std::size_t expected) const {
    if (tokens.size() - from != expected)
      fail("expected " + std::to_string(expected) + " values after '" + tokens[0] + "', got " +
           std::to_string(tokens.size() - from));
    Vec out;
    for (std::size_t i = from; i < tokens.size(); ++i) out.push_back(number(tokens[i]));
    return out;
  }
};

}  // namespace detail

inline ProblemSpec parse_problem(std::istream& is) {
  detail::LineReader reader{is};
  std::vector<std::string> t;
  if (!reader.next(t) || t.size() != 2 || t[0] != "drolab-problem" || t[1] != "v1")
    reader.fail("expected header 'drolab-problem v1'");

  ProblemSpec p;
  long n = -1, m = -1;
  bool saw_alpha = false;
  while (reader.next(t)) {
    const std::string& key = t[0];
    if (key == "n" || key == "m") {
      if (t.size() != 2) reader.fail("expected one integer after '" + key + "'");
      const double v = reader.number(t[1]);
      if (v < 1 || v != std::floor(v)) reader.fail("'" + key + "' must be a positive integer");
      (key == "n" ? n : m) = static_cast<long>(v);
      continue;
    }
    if (key == "alpha") {
      p.alpha = reader.numbers(t, 1, 1)[0];
      saw_alpha = true;
      continue;
    }
    if (n < 0 || m < 0) reader.fail("'n' and 'm' must be declared before '" + key + "'");
    if (key == "objective") {
      p.objective = reader.numbers(t, 1, n);
    } else if (key == "x_lower") {
      p.x_lower = reader.numbers(t, 1, n);
    } else if (key == "x_upper") {
      p.x_upper = reader.numbers(t, 1, n);
    } else if (key == "support_lo") {
      p.support.lo = reader.numbers(t, 1, m);
    } else if (key == "support_hi") {
      p.support.hi = reader.numbers(t, 1, m);
    } else if (key == "x_row") {
      Vec row = reader.numbers(t, 1, n + 1);
      p.x_ineq_rhs.push_back(row.back());
      row.pop_back();
      p.x_ineq_lhs.push_back(std::move(row));
    } else if (key == "piece") {
      if (t.size() != 1) reader.fail("'piece' takes no arguments");
      FPiece piece;
      piece.xi_coeff.assign(m, 0.0);
      piece.x_coeff.assign(n, 0.0);
      bool closed = false;
      while (reader.next(t)) {
        if (t[0] == "end") {
          closed = true;
          break;
        }
        if (t[0] == "xi_coeff") {
          piece.xi_coeff = reader.numbers(t, 1, m);
        } else if (t[0] == "xi_x_row") {
          if (piece.xi_x_coeff.size() >= static_cast<std::size_t>(m))
            reader.fail("more than m xi_x_row lines");
          piece.xi_x_coeff.push_back(reader.numbers(t, 1, n));
        } else if (t[0] == "x_coeff") {
          piece.x_coeff = reader.numbers(t, 1, n);
        } else if (t[0] == "offset") {
          piece.offset = reader.numbers(t, 1, 1)[0];
        } else {
          reader.fail("unknown piece key '" + t[0] + "'");
        }
      }
      if (!closed) reader.fail("unterminated piece block");
      if (!piece.xi_x_coeff.empty() && piece.xi_x_coeff.size() != static_cast<std::size_t>(m))
        reader.fail("piece has " + std::to_string(piece.xi_x_coeff.size()) +
                    " xi_x_row lines; need 0 or m");
      p.f_pieces.push_back(std::move(piece));
    } else {
      reader.fail("unknown key '" + key + "'");
    }
  }
  if (n < 0 || m < 0) throw validation_error("config", "missing 'n'/'m' declarations");
  if (!saw_alpha) throw validation_error("config", "missing 'alpha'");
  try {
    p.validate();
  } catch (const validation_error& e) {
    throw validation_error("config", std::string("invalid problem: ") + e.what());
  }
  return p;
}

inline ProblemSpec read_problem_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "path", "cannot open '" + path + "'");
  return parse_problem(is);
}

inline void serialize_problem(const ProblemSpec& p, std::ostream& os) {
  p.validate();
  os << "drolab-problem v1\n";
  os << "n " << p.n() << "\nm " << p.m() << "\n";
  const auto row = [&os](const char* key, const Vec& v) {
    os << key;
    for (double x : v) os << ' ' << format_double(x);
    os << "\n";
  };
  row("objective", p.objective);
  os << "alpha " << format_double(p.alpha) << "\n";
  row("x_lower", p.x_lower);
  row("x_upper", p.x_upper);
  row("support_lo", p.support.lo);
  row("support_hi", p.support.hi);
  for (std::size_t i = 0; i < p.x_ineq_lhs.size(); ++i) {
    Vec r = p.x_ineq_lhs[i];
    r.push_back(p.x_ineq_rhs[i]);
    row("x_row", r);
  }
  for (const FPiece& piece : p.f_pieces) {
    os << "piece\n";
    row("  xi_coeff", piece.xi_coeff);
    for (const Vec& r : piece.xi_x_coeff) row("  xi_x_row", r);
    row("  x_coeff", piece.x_coeff);
    os << "  offset " << format_double(piece.offset) << "\n";
    os << "end\n";
  }
}

}  // namespace dro
