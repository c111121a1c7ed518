#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dro {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

// Repo-wide numerical contract. Feasibility residuals are judged against
// kFeasTol, optimality/value comparisons against kOptTol. Probability weights
// must sum to one within kWeightTol.
inline constexpr double kFeasTol = 1e-8;
inline constexpr double kOptTol = 1e-9;
inline constexpr double kWeightTol = 1e-12;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Thrown when input data violates a documented precondition. `field` names
// the offending argument or config key so CLI layers can report it verbatim.
class validation_error : public std::invalid_argument {
 public:
  validation_error(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline void require(bool condition, const std::string& field, const std::string& message) {
  if (!condition) throw validation_error(field, message);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l1_norm(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline double linf_norm(const Vec& a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::abs(v));
  return s;
}

inline double l1_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline bool is_finite(double v) { return std::isfinite(v); }

// Full-precision decimal rendering; round-trips any double, so files written
// with it are byte-stable across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Axis-aligned box, used both for distribution supports and decision bounds.
struct Box {
  Vec lo;
  Vec hi;

  std::size_t dim() const { return lo.size(); }

  void validate(const std::string& field = "box") const {
    require(lo.size() == hi.size(), field, "lo/hi dimension mismatch");
    require(!lo.empty(), field, "box must have at least one axis");
    for (std::size_t r = 0; r < lo.size(); ++r) {
      require(std::isfinite(lo[r]) && std::isfinite(hi[r]), field,
              "bounds must be finite on axis " + std::to_string(r));
      require(lo[r] <= hi[r], field, "lo > hi on axis " + std::to_string(r));
    }
  }

  bool contains(const Vec& p, double tol = kFeasTol) const {
    if (p.size() != lo.size()) return false;
    for (std::size_t r = 0; r < lo.size(); ++r)
      if (p[r] < lo[r] - tol || p[r] > hi[r] + tol) return false;
    return true;
  }

  double l1_diameter() const {
    double s = 0.0;
    for (std::size_t r = 0; r < lo.size(); ++r) s += hi[r] - lo[r];
    return s;
  }
};

}  // namespace dro
