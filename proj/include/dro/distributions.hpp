#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dro/core.hpp"
#include "dro/lp.hpp"
#include "dro/rng.hpp"

namespace dro {

// Finite weighted point set; the sample-average proxy for an unknown
// distribution and the center of every ambiguity set.
struct EmpiricalDistribution {
  Mat points;   // N x m
  Vec weights;  // nonnegative, sums to one within kWeightTol

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : points[0].size(); }

  void validate() const {
    require(!points.empty(), "points", "at least one atom required");
    const std::size_t m = points[0].size();
    require(m > 0, "points", "atoms must have at least one coordinate");
    require(weights.size() == points.size(), "weights", "size must match point count");
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      require(points[i].size() == m, "points", "atom " + std::to_string(i) + " has wrong dim");
      require(all_finite(points[i]), "points", "atom " + std::to_string(i) + " is non-finite");
      require(is_finite(weights[i]) && weights[i] >= 0.0, "weights",
              "weight " + std::to_string(i) + " must be nonnegative");
      total += weights[i];
    }
    require(std::abs(total - 1.0) <= kWeightTol * points.size() + kWeightTol, "weights",
            "weights must sum to one");
  }

  static EmpiricalDistribution from_samples(Mat samples) {
    EmpiricalDistribution d;
    d.weights.assign(samples.size(), samples.empty() ? 0.0 : 1.0 / samples.size());
    d.points = std::move(samples);
    d.validate();
    return d;
  }
};

// CSV layout: header "w,xi_1,...,xi_m", one atom per row. Doubles are
// round-tripped at full precision so written files are byte-stable.
inline void write_csv(const EmpiricalDistribution& dist, std::ostream& os) {
  dist.validate();
  os << "w";
  for (std::size_t r = 0; r < dist.dim(); ++r) os << ",xi_" << (r + 1);
  os << "\n";
  for (std::size_t i = 0; i < dist.size(); ++i) {
    os << format_double(dist.weights[i]);
    for (double v : dist.points[i]) os << ',' << format_double(v);
    os << "\n";
  }
}

inline EmpiricalDistribution read_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "csv", "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  require(!cols.empty() && cols[0] == "w", "csv", "header must start with 'w'");
  require(cols.size() >= 2, "csv", "header must declare at least one coordinate");
  for (std::size_t r = 1; r < cols.size(); ++r)
    require(cols[r] == "xi_" + std::to_string(r), "csv",
            "unexpected header column '" + cols[r] + "'");
  const std::size_t m = cols.size() - 1;

  EmpiricalDistribution dist;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    Vec row;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        require(used == tok.size(), "csv", "trailing characters");
      } catch (const validation_error&) {
        throw;
      } catch (...) {
        throw validation_error("csv", "line " + std::to_string(lineno) + ": bad number '" +
                                          tok + "'");
      }
    }
    require(row.size() == m + 1, "csv",
            "line " + std::to_string(lineno) + ": expected " + std::to_string(m + 1) +
                " fields, got " + std::to_string(row.size()));
    dist.weights.push_back(row[0]);
    dist.points.emplace_back(row.begin() + 1, row.end());
  }
  dist.validate();
  return dist;
}

inline void write_csv_file(const EmpiricalDistribution& dist, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "path", "cannot open '" + path + "' for writing");
  write_csv(dist, os);
}

inline EmpiricalDistribution read_csv_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "path", "cannot open '" + path + "'");
  return read_csv(is);
}

// The ground metric is fixed to l1 throughout; the tag exists so configs and
// serialized results state it explicitly.
enum class GroundMetric { L1 };

// Wasserstein ball around an empirical center.
struct AmbiguitySet {
  EmpiricalDistribution center;
  double radius = 0.0;
  GroundMetric metric = GroundMetric::L1;

  void validate() const {
    center.validate();
    require(is_finite(radius) && radius >= 0.0, "radius", "must be >= 0");
  }
};

// Sampling models for ground-truth distributions. Every model lives on a
// finite box; mixtures combine component models with fixed weights.
struct DistributionModel {
  enum class Kind { UniformBox, TruncatedGaussian, FiniteMixture };

  Kind kind = Kind::UniformBox;
  Box box;       // sampling region for the two leaf kinds
  Vec mean;      // TruncatedGaussian
  Vec stddev;    // TruncatedGaussian
  std::vector<DistributionModel> components;  // FiniteMixture
  Vec mixture_weights;

  static DistributionModel uniform_box(Box b) {
    DistributionModel m;
    m.kind = Kind::UniformBox;
    m.box = std::move(b);
    return m;
  }

  static DistributionModel truncated_gaussian(Vec mean, Vec stddev, Box b) {
    DistributionModel m;
    m.kind = Kind::TruncatedGaussian;
    m.mean = std::move(mean);
    m.stddev = std::move(stddev);
    m.box = std::move(b);
    return m;
  }

  static DistributionModel mixture(std::vector<DistributionModel> components, Vec weights) {
    DistributionModel m;
    m.kind = Kind::FiniteMixture;
    m.components = std::move(components);
    m.mixture_weights = std::move(weights);
    return m;
  }

  std::size_t dim() const {
    if (kind == Kind::FiniteMixture)
      return components.empty() ? 0 : components[0].dim();
    return box.dim();
  }

  void validate() const {
    switch (kind) {
      case Kind::UniformBox:
        box.validate("model.box");
        for (std::size_t r = 0; r < box.dim(); ++r)
          require(box.lo[r] < box.hi[r], "model.box",
                  "zero-volume axis " + std::to_string(r));
        break;
      case Kind::TruncatedGaussian:
        box.validate("model.box");
        require(mean.size() == box.dim() && stddev.size() == box.dim(), "model",
                "mean/stddev must match box dimension");
        require(all_finite(mean) && all_finite(stddev), "model", "non-finite parameters");
        for (double s : stddev) require(s > 0.0, "model.stddev", "must be > 0");
        break;
      case Kind::FiniteMixture: {
        require(!components.empty(), "model.components", "mixture needs components");
        require(mixture_weights.size() == components.size(), "model.mixture_weights",
                "size mismatch");
        double total = 0.0;
        for (double w : mixture_weights) {
          require(is_finite(w) && w >= 0.0, "model.mixture_weights", "must be >= 0");
          total += w;
        }
        require(std::abs(total - 1.0) <= kWeightTol * (1 + components.size()),
                "model.mixture_weights", "must sum to one");
        const std::size_t m = components[0].dim();
        for (const auto& c : components) {
          require(c.kind != Kind::FiniteMixture, "model.components",
                  "nested mixtures are not supported");
          c.validate();
          require(c.dim() == m, "model.components", "dimension mismatch");
        }
        break;
      }
    }
  }

  // Smallest box containing all mass.
  Box support() const {
    if (kind != Kind::FiniteMixture) return box;
    Box s = components[0].box;
    for (const auto& c : components)
      for (std::size_t r = 0; r < s.dim(); ++r) {
        s.lo[r] = std::min(s.lo[r], c.box.lo[r]);
        s.hi[r] = std::max(s.hi[r], c.box.hi[r]);
      }
    return s;
  }
};

namespace detail {

inline Vec sample_point(const DistributionModel& model, CounterRng& rng) {
  switch (model.kind) {
    case DistributionModel::Kind::UniformBox: {
      Vec p(model.box.dim());
      for (std::size_t r = 0; r < p.size(); ++r)
        p[r] = model.box.lo[r] + rng.next_double() * (model.box.hi[r] - model.box.lo[r]);
      return p;
    }
    case DistributionModel::Kind::TruncatedGaussian: {
      const std::size_t m = model.box.dim();
      Vec p(m);
      for (int attempt = 0; attempt < 100000; ++attempt) {
        bool ok = true;
        for (std::size_t r = 0; r < m; ++r) {
          p[r] = model.mean[r] + model.stddev[r] * rng.next_normal();
          if (p[r] < model.box.lo[r] || p[r] > model.box.hi[r]) ok = false;
        }
        if (ok) return p;
      }
      throw validation_error("model", "truncated gaussian rejection failed; box mass ~ 0");
    }
    default: {
      const double u = rng.next_double();
      double acc = 0.0;
      std::size_t pick = model.components.size() - 1;
      for (std::size_t k = 0; k < model.components.size(); ++k) {
        acc += model.mixture_weights[k];
        if (u < acc) {
          pick = k;
          break;
        }
      }
      return sample_point(model.components[pick], rng);
    }
  }
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

// Probability assigned by the (leaf) model to the axis-aligned cell, using
// the product structure of both leaf kinds.
inline double leaf_cell_mass(const DistributionModel& model, const Vec& c_lo, const Vec& c_hi) {
  double mass = 1.0;
  for (std::size_t r = 0; r < model.box.dim(); ++r) {
    const double lo = std::max(c_lo[r], model.box.lo[r]);
    const double hi = std::min(c_hi[r], model.box.hi[r]);
    if (hi <= lo) return 0.0;
    if (model.kind == DistributionModel::Kind::UniformBox) {
      mass *= (hi - lo) / (model.box.hi[r] - model.box.lo[r]);
    } else {
      const double z = normal_cdf((model.box.hi[r] - model.mean[r]) / model.stddev[r]) -
                       normal_cdf((model.box.lo[r] - model.mean[r]) / model.stddev[r]);
      require(z > 1e-300, "model", "truncation region carries no mass");
      mass *= (normal_cdf((hi - model.mean[r]) / model.stddev[r]) -
               normal_cdf((lo - model.mean[r]) / model.stddev[r])) /
              z;
    }
  }
  return mass;
}

inline double cell_mass(const DistributionModel& model, const Vec& c_lo, const Vec& c_hi) {
  if (model.kind != DistributionModel::Kind::FiniteMixture)
    return leaf_cell_mass(model, c_lo, c_hi);
  double mass = 0.0;
  for (std::size_t k = 0; k < model.components.size(); ++k)
    mass += model.mixture_weights[k] * leaf_cell_mass(model.components[k], c_lo, c_hi);
  return mass;
}

}  // namespace detail

// Draws `count` points. The stream is keyed on (seed, draw index), so the
// first n points of sample(model, N, seed) coincide with sample(model, n,
// seed) for n <= N: sample sets along a path are nested by construction.
inline Mat sample(const DistributionModel& model, std::size_t count, std::uint64_t seed) {
  model.validate();
  CounterRng rng(seed);
  Mat out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(detail::sample_point(model, rng));
  return out;
}

// Deterministic grid measure: per axis the support splits into `resolution`
// equal cells, atoms sit at cell midpoints and carry the exact model mass of
// their cell. Zero-mass cells are dropped; weights are renormalized to one.
inline EmpiricalDistribution discretize(const DistributionModel& model, int resolution) {
  model.validate();
  require(resolution >= 1, "resolution", "must be >= 1");
  const Box sup = model.support();
  const std::size_t m = sup.dim();
  require(m <= 2, "model", "discretize supports dimension 1 and 2 only");

  const auto axis_edges = [&](std::size_t r) {
    Vec edges(resolution + 1);
    for (int k = 0; k <= resolution; ++k)
      edges[k] = sup.lo[r] + (sup.hi[r] - sup.lo[r]) * k / resolution;
    return edges;
  };

  EmpiricalDistribution grid;
  if (m == 1) {
    const Vec e = axis_edges(0);
    for (int k = 0; k < resolution; ++k) {
      const double mass = detail::cell_mass(model, {e[k]}, {e[k + 1]});
      if (mass > 0.0) {
        grid.points.push_back({0.5 * (e[k] + e[k + 1])});
        grid.weights.push_back(mass);
      }
    }
  } else {
    const Vec e0 = axis_edges(0);
    const Vec e1 = axis_edges(1);
    for (int a = 0; a < resolution; ++a)
      for (int b = 0; b < resolution; ++b) {
        const double mass = detail::cell_mass(model, {e0[a], e1[b]}, {e0[a + 1], e1[b + 1]});
        if (mass > 0.0) {
          grid.points.push_back({0.5 * (e0[a] + e0[a + 1]), 0.5 * (e1[b] + e1[b + 1])});
          grid.weights.push_back(mass);
        }
      }
  }
  require(!grid.points.empty(), "model", "discretization produced no mass");
  double total = 0.0;
  for (double w : grid.weights) total += w;
  for (double& w : grid.weights) w /= total;
  grid.validate();
  return grid;
}

// Concentration-style radius schedule: beta_N = N^-p and
// epsilon_N = C * (log(1/beta_N)/N)^(1/max(m,2)), with epsilon_1 = C since
// the log vanishes at N = 1. Note epsilon_N peaks at N = 3 for m = 1; it is
// strictly decreasing from there on.
struct RadiusSchedule {
  double scale = 1.0;                // C
  double confidence_exponent = 2.0;  // p
  int dimension = 1;                 // m

  void validate() const {
    require(is_finite(scale) && scale > 0.0, "schedule.scale", "C must be > 0");
    require(is_finite(confidence_exponent) && confidence_exponent > 1.0,
            "schedule.confidence_exponent", "p must be > 1");
    require(dimension >= 1, "schedule.dimension", "m must be >= 1");
  }

  double beta(std::size_t n) const {
    require(n >= 1, "N", "must be >= 1");
    return std::pow(static_cast<double>(n), -confidence_exponent);
  }

  double radius(std::size_t n) const {
    validate();
    require(n >= 1, "N", "must be >= 1");
    if (n == 1) return scale;
    const double exponent = 1.0 / std::max(dimension, 2);
    const double ratio = confidence_exponent * std::log(static_cast<double>(n)) / n;
    return scale * std::pow(ratio, exponent);
  }
};

// Exact W1 between finite point sets via the transport LP with l1 ground
// cost. Used directly for m >= 2 and as the oracle for the 1-d fast path.
inline double wasserstein1(const EmpiricalDistribution& mu, const EmpiricalDistribution& nu) {
  mu.validate();
  nu.validate();
  require(mu.dim() == nu.dim(), "distributions", "dimension mismatch");
  Mat cost(mu.size(), Vec(nu.size(), 0.0));
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j)
      cost[i][j] = l1_dist(mu.points[i], nu.points[j]);
  TransportResult t = solve_transport(mu.weights, nu.weights, cost);
  require(t.status == LpStatus::Optimal, "transport", "transport LP did not solve");
  return t.cost;
}

// One-dimensional W1 by integrating the quantile difference over merged
// weight breakpoints; identical to the LP value on the line.
inline double wasserstein1_1d(const EmpiricalDistribution& mu, const EmpiricalDistribution& nu) {
  mu.validate();
  nu.validate();
  require(mu.dim() == 1 && nu.dim() == 1, "distributions", "fast path requires dimension 1");

  const auto sorted_atoms = [](const EmpiricalDistribution& d) {
    std::vector<std::pair<double, double>> a(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) a[i] = {d.points[i][0], d.weights[i]};
    std::sort(a.begin(), a.end());
    return a;
  };
  auto a = sorted_atoms(mu);
  auto b = sorted_atoms(nu);

  double total = 0.0;
  std::size_t i = 0, j = 0;
  double rem_a = a.empty() ? 0.0 : a[0].second;
  double rem_b = b.empty() ? 0.0 : b[0].second;
  while (i < a.size() && j < b.size()) {
    const double step = std::min(rem_a, rem_b);
    total += step * std::abs(a[i].first - b[j].first);
    rem_a -= step;
    rem_b -= step;
    if (rem_a <= 0.0) {
      if (++i < a.size()) rem_a = a[i].second;
    }
    if (rem_b <= 0.0) {
      if (++j < b.size()) rem_b = b[j].second;
    }
  }
  return total;
}

}  // namespace dro
