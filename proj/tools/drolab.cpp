#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <dro/drolab.hpp>

#include "selftest.hpp"

namespace {

using namespace dro;

std::string resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("DROLAB_OUT_DIR");
  return env && *env ? env : ".";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(std::filesystem::is_directory(dir), "out",
          "cannot create output directory '" + dir + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  require(os.good(), "out", "cannot open '" + path + "' for writing");
  os << content;
  require(os.good(), "out", "write to '" + path + "' failed");
}

int exit_code_for(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return 0;
    case SolveStatus::Infeasible: return 2;
    default: return 3;
  }
}

std::string brief(const SolveResult& result) {
  std::string line = std::string("status=") + to_string(result.status);
  if (result.status == SolveStatus::Optimal) {
    line += " value=" + format_double(result.value) + " x=[";
    for (std::size_t j = 0; j < result.x.size(); ++j)
      line += (j ? "," : "") + format_double(result.x[j]);
    line += "]";
    if (std::isfinite(result.t)) line += " t=" + format_double(result.t);
  }
  line += " method=" + result.diagnostics.method;
  return line;
}

struct SolveArgs {
  std::string problem_path;
  std::string data_path;
  std::string mode;
  std::string out;
  double theta = 0.0;
  double alpha_override = 0.0;
  bool has_alpha_override = false;
  GridSearchConfig grid;
};

int cmd_solve(const SolveArgs& args) {
  ProblemSpec problem = read_problem_file(args.problem_path);
  if (args.has_alpha_override) problem.alpha = args.alpha_override;
  problem.validate();
  const EmpiricalDistribution data = read_csv_file(args.data_path);
  require(std::isfinite(args.theta) && args.theta >= 0.0, "--theta", "must be >= 0");
  const bool robust = args.mode == "drrcp" || args.mode == "drccp";
  require(robust || args.theta == 0.0, "--theta", "only applies to drrcp and drccp");

  SolveResult result;
  if (args.mode == "rcp") {
    result = solve_rcp_reference(problem, data);
  } else if (args.mode == "ccp") {
    result = solve_ccp_reference(problem, data, args.grid);
  } else if (args.mode == "drrcp") {
    AmbiguitySet ambiguity;
    ambiguity.center = data;
    ambiguity.radius = args.theta;
    result = solve_drrcp(problem, ambiguity);
  } else if (args.mode == "drccp") {
    AmbiguitySet ambiguity;
    ambiguity.center = data;
    ambiguity.radius = args.theta;
    result = solve_drccp(problem, ambiguity, args.grid);
  } else {
    throw validation_error("--mode", "expected rcp, drrcp, ccp or drccp, got '" + args.mode +
                                         "'");
  }

  const std::string dir = resolve_out_dir(args.out);
  ensure_dir(dir);
  nlohmann::json j = to_json(result);
  j["mode"] = args.mode;
  j["theta"] = args.theta;
  j["alpha"] = problem.alpha;
  write_text_file(dir + "/result.json", j.dump(2) + "\n");
  std::printf("%s\n", brief(result).c_str());
  return exit_code_for(result.status);
}

int cmd_wasserstein(const std::string& path_a, const std::string& path_b) {
  const EmpiricalDistribution a = read_csv_file(path_a);
  const EmpiricalDistribution b = read_csv_file(path_b);
  require(a.dim() == b.dim(), "inputs", "dimension mismatch between the two files");
  const double d = a.dim() == 1 ? wasserstein1_1d(a, b) : wasserstein1(a, b);
  std::printf("%.9f\n", d);
  return 0;
}

AnalysisTolerances adapted_tolerances(ExperimentMode mode, std::size_t num_sizes) {
  AnalysisTolerances tol = mode == ExperimentMode::Drrcp
                               ? AnalysisTolerances::drrcp_defaults()
                               : AnalysisTolerances::drccp_defaults();
  tol.fraction_from_index = std::min(tol.fraction_from_index, num_sizes - 1);
  if (tol.check_trend) {
    if (num_sizes >= 2)
      tol.trend_index = std::min(tol.trend_index, num_sizes - 2);
    else
      tol.check_trend = false;
  }
  return tol;
}

struct ExperimentArgs {
  std::string config_path;
  std::string out;
  int jobs = 1;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

int cmd_experiment(const ExperimentArgs& args) {
  ExperimentConfig config = read_experiment_file(args.config_path);
  if (args.has_seed) config.base_seed = args.seed;
  const std::string dir = resolve_out_dir(args.out);
  ensure_dir(dir);

  std::vector<ExperimentMode> modes;
  if (config.mode == ExperimentMode::Both)
    modes = {ExperimentMode::Drrcp, ExperimentMode::Drccp};
  else
    modes = {config.mode};

  bool any_optimal = false;
  for (ExperimentMode mode : modes) {
    ExperimentConfig run = config;
    run.mode = mode;
    const std::vector<ExperimentTrace> traces = run_experiment(run, args.jobs);
    for (const ExperimentTrace& tr : traces)
      any_optimal = any_optimal || tr.status == SolveStatus::Optimal;
    const std::string tag = to_string(mode);
    write_traces_file(dir + "/traces_" + tag + ".csv", traces, run.problem.n());
    const ConsistencyReport report =
        analyze(run, traces, adapted_tolerances(mode, run.sample_sizes.size()));
    write_text_file(dir + "/report_" + tag + ".json", to_json(report).dump(2) + "\n");
    const std::string text = report.text();
    write_text_file(dir + "/report_" + tag + ".txt", text);
    std::fputs(text.c_str(), stdout);
  }
  return any_optimal ? 0 : 3;
}

struct ReportArgs {
  std::string config_path;
  std::string traces_path;
  std::string mode;
  std::string out;
};

int cmd_report(const ReportArgs& args) {
  ExperimentConfig config = read_experiment_file(args.config_path);
  if (!args.mode.empty()) config.mode = parse_experiment_mode(args.mode);
  require(config.mode != ExperimentMode::Both, "--mode",
          "pick drrcp or drccp for a both-mode config");
  const auto [traces, n] = read_traces_file(args.traces_path);
  require(n == config.problem.n(), "--traces",
          "decision dimension does not match the configured problem");
  const ConsistencyReport report =
      analyze(config, traces, adapted_tolerances(config.mode, config.sample_sizes.size()));
  const std::string dir = resolve_out_dir(args.out);
  ensure_dir(dir);
  const std::string tag = to_string(config.mode);
  write_text_file(dir + "/report_" + tag + ".json", to_json(report).dump(2) + "\n");
  const std::string text = report.text();
  write_text_file(dir + "/report_" + tag + ".txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein distributionally robust risk- and chance-constrained solver"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "solve one program instance");
  solve->add_option("--problem", solve_args.problem_path, "problem config file")->required();
  solve->add_option("--data", solve_args.data_path, "empirical distribution CSV")->required();
  solve->add_option("--mode", solve_args.mode, "rcp|drrcp|ccp|drccp")->required();
  solve->add_option("--theta", solve_args.theta, "Wasserstein radius (drrcp/drccp)");
  CLI::Option* alpha_opt =
      solve->add_option("--alpha-override", solve_args.alpha_override, "replace alpha");
  solve->add_option("--grid-resolution", solve_args.grid.resolution,
                    "grid points per axis (ccp/drccp)");
  solve->add_option("--refinement-rounds", solve_args.grid.refinement_rounds,
                    "grid refinement rounds (ccp/drccp)");
  solve->add_option("--out", solve_args.out, "output directory (default $DROLAB_OUT_DIR or .)");

  std::string w_a, w_b;
  CLI::App* wasserstein = app.add_subcommand("wasserstein", "W1 distance between two CSVs");
  wasserstein->add_option("file_a", w_a, "first empirical CSV")->required();
  wasserstein->add_option("file_b", w_b, "second empirical CSV")->required();

  ExperimentArgs exp_args;
  CLI::App* experiment = app.add_subcommand("experiment", "run a consistency experiment");
  experiment->add_option("--config", exp_args.config_path, "experiment config file")->required();
  experiment->add_option("--jobs", exp_args.jobs, "worker threads")->check(CLI::Range(1, 256));
  CLI::Option* seed_opt =
      experiment->add_option("--seed", exp_args.seed, "override the config base seed");
  experiment->add_option("--out", exp_args.out, "output directory");

  ReportArgs rep_args;
  CLI::App* report = app.add_subcommand("report", "re-analyze a traces CSV");
  report->add_option("--config", rep_args.config_path, "experiment config file")->required();
  report->add_option("--traces", rep_args.traces_path, "traces CSV")->required();
  report->add_option("--mode", rep_args.mode, "drrcp|drccp (for both-mode configs)");
  report->add_option("--out", rep_args.out, "output directory");

  CLI::App* selftest = app.add_subcommand("selftest", "run the embedded property suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(solve)) {
      solve_args.has_alpha_override = alpha_opt->count() > 0;
      return cmd_solve(solve_args);
    }
    if (app.got_subcommand(wasserstein)) return cmd_wasserstein(w_a, w_b);
    if (app.got_subcommand(experiment)) {
      exp_args.has_seed = seed_opt->count() > 0;
      return cmd_experiment(exp_args);
    }
    if (app.got_subcommand(report)) return cmd_report(rep_args);
    if (app.got_subcommand(selftest)) return drolab_cli::run_selftest() == 0 ? 0 : 1;
  } catch (const validation_error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.field().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
