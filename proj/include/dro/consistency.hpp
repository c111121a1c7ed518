#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dro/chance.hpp"
#include "dro/core.hpp"
#include "dro/distributions.hpp"
#include "dro/lp.hpp"
#include "dro/problem.hpp"
#include "dro/risk.hpp"
#include "dro/rng.hpp"
#include "dro/solvers.hpp"

namespace dro {

enum class ExperimentMode { Drrcp, Drccp, Both };

inline const char* to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Drrcp: return "drrcp";
    case ExperimentMode::Drccp: return "drccp";
    default: return "both";
  }
}

inline ExperimentMode parse_experiment_mode(const std::string& s) {
  if (s == "drrcp") return ExperimentMode::Drrcp;
  if (s == "drccp") return ExperimentMode::Drccp;
  if (s == "both") return ExperimentMode::Both;
  throw validation_error("mode", "expected drrcp, drccp or both, got '" + s + "'");
}

struct ExperimentConfig {
  ProblemSpec problem;
  DistributionModel truth;
  RadiusSchedule schedule;
  std::vector<std::size_t> sample_sizes;
  int paths = 20;
  std::uint64_t base_seed = 1;
  ExperimentMode mode = ExperimentMode::Drrcp;
  int reference_resolution = 2000;  // truth stand-in for margins and baselines
  GridSearchConfig grid;            // chance-mode search parameters
  // Optional analytic anchors for the true problem; NaN / empty means
  // "compute from a reference solve on the discretized truth".
  double analytic_j = std::numeric_limits<double>::quiet_NaN();
  Vec analytic_x;
  // Per-axis resolution of the (x, t) grid behind the report's uniform-gap
  // estimates; 0 disables them.
  int gap_resolution = 5;

  void validate() const {
    problem.validate();
    truth.validate();
    schedule.validate();
    grid.validate();
    require(truth.support().dim() == problem.m(), "truth", "dimension mismatch with problem");
    require(schedule.dimension == static_cast<int>(problem.m()), "schedule.dimension",
            "must match the problem's uncertainty dimension");
    require(!sample_sizes.empty(), "sample_sizes", "must be nonempty");
    for (std::size_t i = 0; i + 1 < sample_sizes.size(); ++i)
      require(sample_sizes[i] < sample_sizes[i + 1], "sample_sizes",
              "must be strictly increasing");
    require(sample_sizes.front() >= 1, "sample_sizes", "must be >= 1");
    require(paths >= 1, "paths", "must be >= 1");
    require(reference_resolution >= 2, "reference_resolution", "must be >= 2");
    require(gap_resolution >= 0, "gap_resolution", "must be >= 0");
    require(analytic_x.empty() || analytic_x.size() == problem.n(), "analytic_x",
            "must have one entry per decision variable");
    if (!analytic_x.empty())
      require(all_finite(analytic_x), "analytic_x", "entries must be finite");
  }
};

struct ExperimentTrace {
  int path = 0;
  std::size_t sample_size = 0;
  double epsilon = 0.0;
  double beta = 0.0;
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = std::numeric_limits<double>::quiet_NaN();
  Vec x;  // NaN-filled when the solve failed
  double t = std::numeric_limits<double>::quiet_NaN();
  // Feasibility of x under the discretized truth: -CVaR of the constraint
  // (risk mode) or safe probability minus (1 - alpha) (chance mode); >= 0
  // means feasible against the stand-in for the true distribution.
  double margin = std::numeric_limits<double>::quiet_NaN();
  double ms = 0.0;
};

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

// For each path r: one nested sample stream seeded with derive_seed(base, r),
// drawn once at max(N); prefixes serve the smaller N values, so the path
// behaves like a single growing dataset. Every (path, N) cell solves the
// selected program with theta = epsilon_N and is recorded even when the
// solver fails. Output is deterministic for a fixed config, independent of
// `jobs`: cells are pure functions of the config written into fixed slots.
inline std::vector<ExperimentTrace> run_experiment(const ExperimentConfig& config, int jobs = 1) {
  config.validate();
  require(config.mode != ExperimentMode::Both, "mode",
          "run_experiment handles one mode at a time; run drrcp and drccp separately");
  require(jobs >= 1, "jobs", "must be >= 1");

  const EmpiricalDistribution truth_disc =
      discretize(config.truth, config.reference_resolution);
  const std::size_t num_sizes = config.sample_sizes.size();
  const std::size_t max_n = config.sample_sizes.back();

  std::vector<Mat> path_samples(config.paths);
  for (int r = 0; r < config.paths; ++r)
    path_samples[r] = sample(config.truth, max_n, derive_seed(config.base_seed, r));

  std::vector<ExperimentTrace> traces(static_cast<std::size_t>(config.paths) * num_sizes);
  const auto run_cell = [&](std::size_t cell) {
    const int r = static_cast<int>(cell / num_sizes);
    const std::size_t s = cell % num_sizes;
    const std::size_t n_samples = config.sample_sizes[s];
    const auto started = std::chrono::steady_clock::now();

    ExperimentTrace& trace = traces[cell];
    trace.path = r;
    trace.sample_size = n_samples;
    trace.epsilon = config.schedule.radius(n_samples);
    trace.beta = config.schedule.beta(n_samples);
    trace.x.assign(config.problem.n(), std::numeric_limits<double>::quiet_NaN());

    AmbiguitySet ambiguity;
    ambiguity.center = EmpiricalDistribution::from_samples(
        Mat(path_samples[r].begin(), path_samples[r].begin() + n_samples));
    ambiguity.radius = trace.epsilon;

    SolveResult result;
    try {
      result = config.mode == ExperimentMode::Drrcp
                   ? solve_drrcp(config.problem, ambiguity)
                   : solve_drccp(config.problem, ambiguity, config.grid);
    } catch (const std::exception&) {
      result = SolveResult{};  // NumericalFailure
    }
    trace.status = result.status;
    if (result.status == SolveStatus::Optimal) {
      trace.value = result.value;
      trace.x = result.x;
      trace.t = result.t;
      if (config.mode == ExperimentMode::Drrcp) {
        const ScalarSample losses = scalar_losses(config.problem, truth_disc, result.x);
        trace.margin = -cvar_alpha(losses, config.problem.alpha);
      } else {
        trace.margin = empirical_prob_safe({config.problem, result.x}, truth_disc) -
                       (1.0 - config.problem.alpha);
      }
    }
    trace.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         started)
                   .count();
  };

  if (jobs == 1) {
    for (std::size_t cell = 0; cell < traces.size(); ++cell) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int count = std::min<int>(jobs, static_cast<int>(traces.size()));
    workers.reserve(count);
    for (int w = 0; w < count; ++w)
      workers.emplace_back([&] {
        for (std::size_t cell = next.fetch_add(1); cell < traces.size();
             cell = next.fetch_add(1))
          run_cell(cell);
      });
    for (std::thread& w : workers) w.join();
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline SolveStatus parse_solve_status(const std::string& s) {
  if (s == "optimal") return SolveStatus::Optimal;
  if (s == "infeasible") return SolveStatus::Infeasible;
  if (s == "numerical_failure") return SolveStatus::NumericalFailure;
  throw validation_error("status", "unknown solve status '" + s + "'");
}

inline void write_traces(std::ostream& os, const std::vector<ExperimentTrace>& traces,
                         std::size_t n) {
  os << "path,N,epsilon,beta,status,J";
  for (std::size_t j = 1; j <= n; ++j) os << ",x_" << j;
  os << ",t,margin,ms\n";
  for (const ExperimentTrace& tr : traces) {
    require(tr.x.size() == n, "traces", "decision dimension mismatch");
    os << tr.path << ',' << tr.sample_size << ',' << format_double(tr.epsilon) << ','
       << format_double(tr.beta) << ',' << to_string(tr.status) << ','
       << format_double(tr.value);
    for (std::size_t j = 0; j < n; ++j) os << ',' << format_double(tr.x[j]);
    os << ',' << format_double(tr.t) << ',' << format_double(tr.margin) << ','
       << format_double(tr.ms) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline double csv_number(const std::string& field, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used == field.size()) return v;
  } catch (const std::exception&) {
  }
  throw validation_error("traces", "line " + std::to_string(line_no) + ": bad number '" +
                                       field + "'");
}

}  // namespace detail

// Returns the traces and the decision dimension inferred from the header.
inline std::pair<std::vector<ExperimentTrace>, std::size_t> read_traces(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "traces", "missing header");
  const std::vector<std::string> header = detail::split_csv_line(line);
  require(header.size() >= 10 && header[0] == "path" && header[1] == "N" &&
              header[2] == "epsilon" && header[3] == "beta" && header[4] == "status" &&
              header[5] == "J" && header[header.size() - 3] == "t" &&
              header[header.size() - 2] == "margin" && header.back() == "ms",
          "traces", "unexpected header '" + line + "'");
  const std::size_t n = header.size() - 9;
  for (std::size_t j = 0; j < n; ++j)
    require(header[6 + j] == "x_" + std::to_string(j + 1), "traces",
            "unexpected header column '" + header[6 + j] + "'");

  std::vector<ExperimentTrace> traces;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    require(f.size() == header.size(), "traces",
            "line " + std::to_string(line_no) + ": expected " +
                std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    ExperimentTrace tr;
    tr.path = static_cast<int>(detail::csv_number(f[0], line_no));
    tr.sample_size = static_cast<std::size_t>(detail::csv_number(f[1], line_no));
    tr.epsilon = detail::csv_number(f[2], line_no);
    tr.beta = detail::csv_number(f[3], line_no);
    tr.status = parse_solve_status(f[4]);
    tr.value = detail::csv_number(f[5], line_no);
    tr.x.resize(n);
    for (std::size_t j = 0; j < n; ++j) tr.x[j] = detail::csv_number(f[6 + j], line_no);
    tr.t = detail::csv_number(f[6 + n], line_no);
    tr.margin = detail::csv_number(f[7 + n], line_no);
    tr.ms = detail::csv_number(f[8 + n], line_no);
    traces.push_back(std::move(tr));
  }
  return {std::move(traces), n};
}

inline void write_traces_file(const std::string& path, const std::vector<ExperimentTrace>& traces,
                              std::size_t n) {
  std::ofstream os(path);
  require(os.good(), "path", "cannot open '" + path + "' for writing");
  write_traces(os, traces, n);
  require(os.good(), "path", "write to '" + path + "' failed");
}

inline std::pair<std::vector<ExperimentTrace>, std::size_t> read_traces_file(
    const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "path", "cannot open '" + path + "'");
  return read_traces(is);
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

struct AnalysisTolerances {
  double j_star_slack = 1e-9;  // assertion (i): J_N >= J* - slack
  double fraction_min = 0.95;
  std::size_t fraction_from_index = 1;  // enforce (i) from the second-smallest N on
  bool require_full_fraction_at_max = true;
  double j_gap_max = 2e-2;  // assertion (ii): median |J_N - J*| at the largest N
  bool check_trend = true;  // ... strictly below the median at sample_sizes[trend_index]
  std::size_t trend_index = 2;
  bool check_x = true;  // assertion (iii): median l2 optimizer distance
  double x_gap_max = 4e-2;

  static AnalysisTolerances drrcp_defaults() { return {}; }

  static AnalysisTolerances drccp_defaults() {
    AnalysisTolerances t;
    t.fraction_from_index = 2;
    t.require_full_fraction_at_max = false;
    t.j_gap_max = 3e-2;
    t.check_trend = false;
    t.check_x = false;
    return t;
  }
};

struct SampleSizeStats {
  std::size_t sample_size = 0;
  double epsilon = 0.0;
  double beta = 0.0;
  int solved = 0;
  int failed = 0;
  double fraction_above = 0.0;  // share of solved paths with J >= J* - slack
  double median_j_gap = std::numeric_limits<double>::quiet_NaN();
  double p90_j_gap = std::numeric_limits<double>::quiet_NaN();
  double median_x_dist = std::numeric_limits<double>::quiet_NaN();
  double median_margin = std::numeric_limits<double>::quiet_NaN();
  // Uniform-convergence surrogates on the path-0 center (NaN when disabled).
  double uniform_gap = std::numeric_limits<double>::quiet_NaN();
  double gap_bound = std::numeric_limits<double>::quiet_NaN();
  double w1_plus_eps = std::numeric_limits<double>::quiet_NaN();
};

struct ConsistencyReport {
  ExperimentMode mode = ExperimentMode::Drrcp;
  double j_star = std::numeric_limits<double>::quiet_NaN();
  Vec x_star;  // empty when unknown
  std::vector<SampleSizeStats> per_size;
  bool assert_lower_bound = false;   // (i)
  bool assert_value_gap = false;     // (ii)
  bool assert_optimizer_gap = false;  // (iii); true when not applicable
  std::vector<std::string> messages;

  bool all_pass() const { return assert_lower_bound && assert_value_gap && assert_optimizer_gap; }

  std::string text() const {
    std::ostringstream os;
    os << "consistency report (" << to_string(mode) << ")\n";
    os << "J* = " << format_double(j_star);
    if (!x_star.empty()) {
      os << "  x* = [";
      for (std::size_t j = 0; j < x_star.size(); ++j)
        os << (j ? ", " : "") << format_double(x_star[j]);
      os << "]";
    }
    os << "\n";
    char buf[256];
    os << "      N    epsilon  solved  frac(i)  med|J-J*|  p90|J-J*|  med|x-x*|  med_margin"
          "  unif_gap  gap_bound\n";
    for (const SampleSizeStats& s : per_size) {
      std::snprintf(buf, sizeof(buf),
                    "%7zu  %9.4g  %3d/%-3d  %7.3f  %9.3e  %9.3e  %9.3e  %10.3e  %8.2e  %9.2e\n",
                    s.sample_size, s.epsilon, s.solved, s.solved + s.failed, s.fraction_above,
                    s.median_j_gap, s.p90_j_gap, s.median_x_dist, s.median_margin,
                    s.uniform_gap, s.gap_bound);
      os << buf;
    }
    for (const std::string& msg : messages) os << msg << "\n";
    return os.str();
  }
};

inline nlohmann::json to_json(const ConsistencyReport& r) {
  nlohmann::json sizes = nlohmann::json::array();
  for (const SampleSizeStats& s : r.per_size)
    sizes.push_back({{"N", s.sample_size},
                     {"epsilon", s.epsilon},
                     {"beta", s.beta},
                     {"solved", s.solved},
                     {"failed", s.failed},
                     {"fraction_above", s.fraction_above},
                     {"median_j_gap", s.median_j_gap},
                     {"p90_j_gap", s.p90_j_gap},
                     {"median_x_dist", s.median_x_dist},
                     {"median_margin", s.median_margin},
                     {"uniform_gap", s.uniform_gap},
                     {"gap_bound", s.gap_bound},
                     {"w1_plus_eps", s.w1_plus_eps}});
  return nlohmann::json{{"schema_version", 1},
                        {"mode", to_string(r.mode)},
                        {"j_star", r.j_star},
                        {"x_star", r.x_star},
                        {"per_size", sizes},
                        {"assertions",
                         {{"lower_bound", r.assert_lower_bound},
                          {"value_gap", r.assert_value_gap},
                          {"optimizer_gap", r.assert_optimizer_gap}}},
                        {"messages", r.messages}};
}

namespace detail {

inline double median_of(Vec v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Nearest-rank upper quantile: the ceil(q * n)-th smallest value.
inline double quantile_of(Vec v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t rank =
      static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace detail

// Aggregates traces per sample size and evaluates the three consistency
// assertions: (i) J_N eventually dominates J* up to slack on almost every
// path, (ii) the median value gap at the largest N is small and below the
// gap at an earlier N, (iii) optimizers approach the reference optimizer.
// Non-optimal traces are excluded from the statistics and counted as
// failures. J* and x* come from the config's analytic anchors when given,
// else from a reference solve on the discretized truth.
inline ConsistencyReport analyze(const ExperimentConfig& config,
                                 const std::vector<ExperimentTrace>& traces,
                                 const AnalysisTolerances& tol) {
  config.validate();
  require(config.mode != ExperimentMode::Both, "mode", "analyze handles one mode at a time");
  require(tol.fraction_from_index < config.sample_sizes.size(), "fraction_from_index",
          "out of range");
  require(!tol.check_trend || tol.trend_index + 1 < config.sample_sizes.size(), "trend_index",
          "must precede the largest sample size");

  ConsistencyReport report;
  report.mode = config.mode;

  const EmpiricalDistribution truth_disc =
      discretize(config.truth, config.reference_resolution);
  if (std::isfinite(config.analytic_j)) {
    report.j_star = config.analytic_j;
    report.x_star = config.analytic_x;
  } else {
    const SolveResult ref = config.mode == ExperimentMode::Drrcp
                                ? solve_rcp_reference(config.problem, truth_disc)
                                : solve_ccp_reference(config.problem, truth_disc, config.grid);
    require(ref.status == SolveStatus::Optimal, "config",
            "reference solve on the discretized truth did not return optimal");
    report.j_star = ref.value;
    report.x_star = ref.x;
  }

  const double slater = strict_feasibility_margin(config.problem);
  if (slater >= 0.0)
    report.messages.push_back(
        "warning: no decision is strictly safe for every support point (margin " +
        format_double(slater) + "); consistency guarantees may not apply");

  // Optional uniform-gap surrogates are computed against the path-0 centers.
  const bool want_gap = config.gap_resolution >= 2 && config.problem.n() <= 3;
  Mat gap_samples;
  double lipschitz = 0.0;
  std::pair<double, double> f_bracket{0.0, 0.0};
  if (want_gap) {
    gap_samples = sample(config.truth, config.sample_sizes.back(),
                         derive_seed(config.base_seed, 0));
    lipschitz = lipschitz_constant(config.problem);
    f_bracket = detail::global_t_bracket(config.problem);
  }

  bool frac_ok = true, frac_full_ok = true;
  std::string frac_detail;
  Vec median_gaps(config.sample_sizes.size(), std::numeric_limits<double>::quiet_NaN());

  for (std::size_t s = 0; s < config.sample_sizes.size(); ++s) {
    SampleSizeStats stats;
    stats.sample_size = config.sample_sizes[s];
    stats.epsilon = config.schedule.radius(stats.sample_size);
    stats.beta = config.schedule.beta(stats.sample_size);

    Vec j_gaps, x_dists, margins;
    int above = 0;
    for (const ExperimentTrace& tr : traces) {
      if (tr.sample_size != stats.sample_size) continue;
      require(tr.x.size() == config.problem.n(), "traces",
              "decision dimension mismatch with the configured problem");
      if (tr.status != SolveStatus::Optimal) {
        ++stats.failed;
        continue;
      }
      ++stats.solved;
      if (tr.value >= report.j_star - tol.j_star_slack) ++above;
      j_gaps.push_back(std::abs(tr.value - report.j_star));
      margins.push_back(tr.margin);
      if (!report.x_star.empty()) {
        double sq = 0.0;
        for (std::size_t j = 0; j < report.x_star.size(); ++j)
          sq += (tr.x[j] - report.x_star[j]) * (tr.x[j] - report.x_star[j]);
        x_dists.push_back(std::sqrt(sq));
      }
    }
    stats.fraction_above = stats.solved ? static_cast<double>(above) / stats.solved : 0.0;
    stats.median_j_gap = detail::median_of(j_gaps);
    stats.p90_j_gap = detail::quantile_of(j_gaps, 0.9);
    stats.median_x_dist = detail::median_of(x_dists);
    stats.median_margin = detail::median_of(margins);
    median_gaps[s] = stats.median_j_gap;

    if (stats.solved == 0)
      report.messages.push_back("warning: no optimal trace at N = " +
                                std::to_string(stats.sample_size));

    if (want_gap) {
      AmbiguitySet ambiguity;
      ambiguity.center = EmpiricalDistribution::from_samples(
          Mat(gap_samples.begin(), gap_samples.begin() + stats.sample_size));
      ambiguity.radius = stats.epsilon;
      const detail::VhatEvaluator vhat(config.problem, ambiguity);
      const int res = config.gap_resolution;
      double gap = 0.0;
      std::vector<int> idx(config.problem.n(), 0);
      while (true) {
        Vec x(config.problem.n());
        for (std::size_t j = 0; j < x.size(); ++j)
          x[j] = config.problem.x_lower[j] +
                 (config.problem.x_upper[j] - config.problem.x_lower[j]) * idx[j] / (res - 1);
        if (config.problem.x_in_domain(x, 1e-9)) {
          for (int ti = 0; ti < res; ++ti) {
            const double t =
                -f_bracket.second +
                (f_bracket.second - f_bracket.first) * ti / (res - 1);
            const double vh = vhat.value(x, t, nullptr, nullptr, nullptr);
            const double v = evaluate_v(config.problem, truth_disc, x, t);
            gap = std::max(gap, std::abs(vh - v));
          }
        }
        std::size_t j = 0;
        while (j < x.size() && ++idx[j] == res) idx[j++] = 0;
        if (j == x.size()) break;
      }
      stats.uniform_gap = gap;
      if (config.problem.m() == 1) {
        const double w1 = wasserstein1_1d(ambiguity.center, truth_disc);
        stats.gap_bound = lipschitz * (w1 + stats.epsilon);
        stats.w1_plus_eps = w1 + stats.epsilon;
      }
    }
    report.per_size.push_back(stats);

    if (s >= tol.fraction_from_index && stats.fraction_above < tol.fraction_min) {
      frac_ok = false;
      frac_detail += " N=" + std::to_string(stats.sample_size) + " fraction " +
                     format_double(stats.fraction_above);
    }
  }

  const SampleSizeStats& last = report.per_size.back();
  if (tol.require_full_fraction_at_max && last.fraction_above < 1.0) {
    frac_full_ok = false;
    frac_detail += " largest N fraction " + format_double(last.fraction_above) + " < 1";
  }
  report.assert_lower_bound = frac_ok && frac_full_ok;
  report.messages.push_back(std::string("assertion (i) lower bound: ") +
                            (report.assert_lower_bound ? "pass" : "fail") +
                            (frac_detail.empty() ? "" : " --" + frac_detail));

  const double last_gap = median_gaps.back();
  bool value_ok = std::isfinite(last_gap) && last_gap <= tol.j_gap_max;
  std::string value_detail = "median " + format_double(last_gap) +
                             (value_ok ? " <= " : " > ") + format_double(tol.j_gap_max) +
                             " at N=" + std::to_string(last.sample_size);
  if (tol.check_trend) {
    const double early = median_gaps[tol.trend_index];
    const bool trend_ok = std::isfinite(last_gap) && std::isfinite(early) && last_gap < early;
    value_detail += "; trend " + format_double(last_gap) + (trend_ok ? " < " : " !< ") +
                    format_double(early) + " vs N=" +
                    std::to_string(config.sample_sizes[tol.trend_index]);
    value_ok = value_ok && trend_ok;
  }
  report.assert_value_gap = value_ok;
  report.messages.push_back(std::string("assertion (ii) value gap: ") +
                            (value_ok ? "pass" : "fail") + " -- " + value_detail);

  if (!tol.check_x) {
    report.assert_optimizer_gap = true;
    report.messages.push_back("assertion (iii) optimizer gap: not checked in this mode");
  } else if (report.x_star.empty()) {
    report.assert_optimizer_gap = false;
    report.messages.push_back("assertion (iii) optimizer gap: fail -- no reference optimizer");
  } else {
    const double xd = last.median_x_dist;
    report.assert_optimizer_gap = std::isfinite(xd) && xd <= tol.x_gap_max;
    report.messages.push_back(
        std::string("assertion (iii) optimizer gap: ") +
        (report.assert_optimizer_gap ? "pass" : "fail") + " -- median " + format_double(xd) +
        (report.assert_optimizer_gap ? " <= " : " > ") + format_double(tol.x_gap_max) +
        " at N=" + std::to_string(last.sample_size));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Uniform convergence gap and radius coverage
// ---------------------------------------------------------------------------

struct GapGridSpec {
  int x_resolution = 5;
  int t_resolution = 5;

  void validate() const {
    require(x_resolution >= 2, "x_resolution", "must be >= 2");
    require(t_resolution >= 2, "t_resolution", "must be >= 2");
  }
};

struct UniformGapResult {
  double gap = 0.0;    // max over the grid of |vhat - v|
  double bound = 0.0;  // L * (W1(reference, center) + theta)
};

// Empirical surrogate for the uniform distance between the worst-case and
// reference epigraph integrands over a compact (x, t) grid, reported with
// the transport-based theoretical bound.
inline UniformGapResult uniform_gap(const ProblemSpec& problem, const AmbiguitySet& ambiguity,
                                    const EmpiricalDistribution& reference,
                                    const GapGridSpec& grid = {}) {
  problem.validate();
  ambiguity.validate();
  reference.validate();
  grid.validate();
  require(reference.dim() == problem.m(), "reference", "dimension mismatch");
  require(ambiguity.center.dim() == problem.m(), "ambiguity", "dimension mismatch");
  require(problem.n() <= 3, "problem", "gap grid supports n <= 3");

  const auto [fmin, fmax] = detail::global_t_bracket(problem);
  double gap = -kInf;
  std::vector<int> idx(problem.n(), 0);
  while (true) {
    Vec x(problem.n());
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = problem.x_lower[j] +
             (problem.x_upper[j] - problem.x_lower[j]) * idx[j] / (grid.x_resolution - 1);
    if (problem.x_in_domain(x, 1e-9)) {
      for (int ti = 0; ti < grid.t_resolution; ++ti) {
        const double t = -fmax + (fmax - fmin) * ti / (grid.t_resolution - 1);
        const double vh = evaluate_vhat(problem, ambiguity, x, t);
        const double v = evaluate_v(problem, reference, x, t);
        gap = std::max(gap, std::abs(vh - v));
      }
    }
    std::size_t j = 0;
    while (j < x.size() && ++idx[j] == grid.x_resolution) idx[j++] = 0;
    if (j == x.size()) break;
  }
  require(gap > -kInf, "grid", "no grid point lies in the decision set X");

  const double w1 = problem.m() == 1 ? wasserstein1_1d(reference, ambiguity.center)
                                     : wasserstein1(reference, ambiguity.center);
  return {gap, lipschitz_constant(problem) * (w1 + ambiguity.radius)};
}

struct CoveragePoint {
  std::size_t sample_size = 0;
  double epsilon = 0.0;
  double beta = 0.0;
  double coverage = 0.0;  // share of trials with W1(empirical, truth) <= epsilon
};

// Monte Carlo check of the finite-sample radius guarantee: per sample size,
// the fraction of independent empirical measures within epsilon_N of (a fine
// discretization of) the truth, to be compared against 1 - beta_N.
inline std::vector<CoveragePoint> coverage_check(const DistributionModel& truth,
                                                 const RadiusSchedule& schedule,
                                                 const std::vector<std::size_t>& sample_sizes,
                                                 int trials, std::uint64_t seed) {
  truth.validate();
  schedule.validate();
  require(!sample_sizes.empty(), "sample_sizes", "must be nonempty");
  require(trials >= 1, "trials", "must be >= 1");
  const std::size_t m = truth.support().dim();
  require(m <= 2, "truth", "coverage check needs a discretizable truth (m <= 2)");

  const EmpiricalDistribution disc = discretize(truth, m == 1 ? 2000 : 44);
  std::vector<CoveragePoint> out;
  for (std::size_t s = 0; s < sample_sizes.size(); ++s) {
    CoveragePoint point;
    point.sample_size = sample_sizes[s];
    point.epsilon = schedule.radius(point.sample_size);
    point.beta = schedule.beta(point.sample_size);
    int hits = 0;
    const std::uint64_t size_seed = derive_seed(seed, static_cast<std::uint64_t>(s));
    for (int trial = 0; trial < trials; ++trial) {
      const EmpiricalDistribution emp = EmpiricalDistribution::from_samples(
          sample(truth, point.sample_size, derive_seed(size_seed, trial)));
      const double w1 = m == 1 ? wasserstein1_1d(emp, disc) : wasserstein1(emp, disc);
      if (w1 <= point.epsilon) ++hits;
    }
    point.coverage = static_cast<double>(hits) / trials;
    out.push_back(point);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment config file (drolab-experiment v1)
// ---------------------------------------------------------------------------

// Text format, one directive per line, '#' comments:
//   drolab-experiment v1
//   problem_file <path>                       (relative to the config file)
//   truth uniform_box <lo...> <hi...>
//   truth truncated_gaussian <mean...> <stddev...> <lo...> <hi...>
//   schedule <C> <p>
//   sample_sizes <N1> <N2> ...
//   paths <count>
//   base_seed <uint64>
//   mode <drrcp|drccp|both>
//   reference_resolution <count>
//   grid_resolution <points>          refinement_rounds <count>
//   analytic_j <value>                analytic_x <v1> ... <vn>   (optional)
//   gap_resolution <points>                                      (optional)
inline ExperimentConfig parse_experiment(std::istream& is, const std::string& base_dir) {
  detail::LineReader reader(is);
  std::vector<std::string> tokens;
  require(reader.next(tokens) && tokens.size() == 2 && tokens[0] == "drolab-experiment" &&
              tokens[1] == "v1",
          "config", "expected header 'drolab-experiment v1'");

  ExperimentConfig config;
  bool have_problem = false, have_truth = false, have_schedule = false, have_sizes = false;
  double schedule_c = 1.0, schedule_p = 2.0;
  const auto slice = [&](std::size_t from, std::size_t count) {
    Vec out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = reader.number(tokens[from + i]);
    return out;
  };
  while (reader.next(tokens)) {
    const std::string& key = tokens[0];
    if (key == "problem_file") {
      if (tokens.size() != 2) reader.fail("problem_file takes one path");
      std::string path = tokens[1];
      if (!path.empty() && path[0] != '/' && !base_dir.empty())
        path = base_dir + "/" + path;
      config.problem = read_problem_file(path);
      have_problem = true;
    } else if (key == "truth") {
      if (tokens.size() < 2) reader.fail("truth needs a kind");
      const std::string& kind = tokens[1];
      if (kind == "uniform_box") {
        if (tokens.size() < 4 || tokens.size() % 2 != 0)
          reader.fail("truth uniform_box needs <lo...> <hi...>");
        const std::size_t m = (tokens.size() - 2) / 2;
        Box b;
        b.lo = slice(2, m);
        b.hi = slice(2 + m, m);
        config.truth = DistributionModel::uniform_box(std::move(b));
      } else if (kind == "truncated_gaussian") {
        if (tokens.size() < 6 || (tokens.size() - 2) % 4 != 0)
          reader.fail("truth truncated_gaussian needs <mean...> <stddev...> <lo...> <hi...>");
        const std::size_t m = (tokens.size() - 2) / 4;
        Vec mean = slice(2, m);
        Vec stddev = slice(2 + m, m);
        Box b;
        b.lo = slice(2 + 2 * m, m);
        b.hi = slice(2 + 3 * m, m);
        config.truth =
            DistributionModel::truncated_gaussian(std::move(mean), std::move(stddev),
                                                  std::move(b));
      } else {
        reader.fail("unknown truth kind '" + kind + "'");
      }
      have_truth = true;
    } else if (key == "schedule") {
      if (tokens.size() != 3) reader.fail("schedule takes <C> <p>");
      schedule_c = reader.number(tokens[1]);
      schedule_p = reader.number(tokens[2]);
      have_schedule = true;
    } else if (key == "sample_sizes") {
      if (tokens.size() < 2) reader.fail("sample_sizes needs at least one value");
      config.sample_sizes.clear();
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        const double v = reader.number(tokens[i]);
        if (v < 1.0 || v != std::floor(v)) reader.fail("sample sizes must be positive integers");
        config.sample_sizes.push_back(static_cast<std::size_t>(v));
      }
      have_sizes = true;
    } else if (key == "paths") {
      if (tokens.size() != 2) reader.fail("paths takes one count");
      config.paths = static_cast<int>(reader.number(tokens[1]));
    } else if (key == "base_seed") {
      if (tokens.size() != 2) reader.fail("base_seed takes one integer");
      config.base_seed = static_cast<std::uint64_t>(reader.number(tokens[1]));
    } else if (key == "mode") {
      if (tokens.size() != 2) reader.fail("mode takes one value");
      config.mode = parse_experiment_mode(tokens[1]);
    } else if (key == "reference_resolution") {
      if (tokens.size() != 2) reader.fail("reference_resolution takes one count");
      config.reference_resolution = static_cast<int>(reader.number(tokens[1]));
    } else if (key == "grid_resolution") {
      if (tokens.size() != 2) reader.fail("grid_resolution takes one count");
      config.grid.resolution = static_cast<int>(reader.number(tokens[1]));
    } else if (key == "refinement_rounds") {
      if (tokens.size() != 2) reader.fail("refinement_rounds takes one count");
      config.grid.refinement_rounds = static_cast<int>(reader.number(tokens[1]));
    } else if (key == "analytic_j") {
      if (tokens.size() != 2) reader.fail("analytic_j takes one value");
      config.analytic_j = reader.number(tokens[1]);
    } else if (key == "analytic_x") {
      if (tokens.size() < 2) reader.fail("analytic_x needs at least one value");
      config.analytic_x = reader.numbers(tokens, 1, tokens.size() - 1);
    } else if (key == "gap_resolution") {
      if (tokens.size() != 2) reader.fail("gap_resolution takes one count");
      config.gap_resolution = static_cast<int>(reader.number(tokens[1]));
    } else {
      reader.fail("unknown directive '" + key + "'");
    }
  }
  require(have_problem, "config", "missing problem_file");
  require(have_truth, "config", "missing truth");
  require(have_schedule, "config", "missing schedule");
  require(have_sizes, "config", "missing sample_sizes");
  config.schedule.scale = schedule_c;
  config.schedule.confidence_exponent = schedule_p;
  config.schedule.dimension = static_cast<int>(config.problem.m());
  config.validate();
  return config;
}

inline ExperimentConfig read_experiment_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "path", "cannot open '" + path + "'");
  const std::size_t slash = path.find_last_of('/');
  return parse_experiment(is, slash == std::string::npos ? "" : path.substr(0, slash));
}

}  // namespace dro
