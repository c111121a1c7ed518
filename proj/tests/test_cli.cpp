#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace dro;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "drolab_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::stringstream buffer;
  buffer << is.rdbuf();
  return buffer.str();
}

// Runs the binary through the shell, capturing exit code and both streams.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = work_dir() / ("stdout_" + std::to_string(counter));
  const fs::path err = work_dir() / ("stderr_" + std::to_string(counter));
  ++counter;
  const std::string cmd = std::string(DROLAB_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string sample_path(const std::string& name) {
  return std::string(DROLAB_SAMPLES_DIR) + "/" + name;
}

const std::string& grid20_csv() {
  static const std::string path = [] {
    const fs::path p = work_dir() / "u20.csv";
    write_csv_file(discretize(DistributionModel::uniform_box({{0.0}, {2.0}}), 20), p.string());
    return p.string();
  }();
  return path;
}

nlohmann::json read_result_json(const fs::path& dir) {
  std::ifstream is(dir / "result.json");
  REQUIRE(is.good());
  return nlohmann::json::parse(is);
}

// The ms column is wall-clock noise; everything before it must be identical.
std::string strip_last_column(const std::string& csv) {
  std::istringstream is(csv);
  std::string line, out;
  while (std::getline(is, line)) {
    const std::size_t comma = line.find_last_of(',');
    out += line.substr(0, comma);
    out += '\n';
  }
  return out;
}

std::string tiny_experiment_config(ExperimentMode mode) {
  const fs::path path = work_dir() / (std::string("tiny_") + to_string(mode) + ".experiment");
  std::ofstream os(path);
  os << "drolab-experiment v1\n"
     << "problem_file " << sample_path("p1.problem") << "\n"
     << "truth uniform_box 0 2\n"
     << "schedule 1 2\n"
     << "sample_sizes 5 10\n"
     << "paths 3\n"
     << "base_seed 3\n"
     << "mode " << to_string(mode) << "\n"
     << "reference_resolution 100\n"
     << "grid_resolution 9\n"
     << "refinement_rounds 2\n"
     << "gap_resolution 0\n";
  return path.string();
}

}  // namespace

TEST_CASE("solve rcp reports the reference optimum and a full result file") {
  const fs::path out = work_dir() / "rcp";
  const RunResult r = run_cli("solve --problem " + sample_path("p1.problem") + " --data " +
                              grid20_csv() + " --mode rcp --out " + out.string());
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("status=optimal") != std::string::npos);
  REQUIRE(r.out.find("method=saa_lp") != std::string::npos);

  const nlohmann::json j = read_result_json(out);
  REQUIRE(j["schema_version"] == 1);
  REQUIRE(j["status"] == "optimal");
  REQUIRE(j["mode"] == "rcp");
  REQUIRE(j["theta"] == 0.0);
  REQUIRE(j["alpha"] == 0.1);
  REQUIRE(j["value"].get<double>() == Catch::Approx(-1.0 / 1.9).margin(1e-9));
  REQUIRE(j["x"].size() == 1);
  REQUIRE(j["t"].is_number());
  REQUIRE(j["diagnostics"]["method"] == "saa_lp");
  REQUIRE_FALSE(j["diagnostics"].contains("sample_epigraphs"));
}

TEST_CASE("solve drrcp at radius zero matches the reference exactly") {
  const fs::path ref_dir = work_dir() / "ref";
  const fs::path dro_dir = work_dir() / "dro0";
  const std::string base = "solve --problem " + sample_path("p1.problem") + " --data " +
                           grid20_csv();
  REQUIRE(run_cli(base + " --mode rcp --out " + ref_dir.string()).code == 0);
  REQUIRE(run_cli(base + " --mode drrcp --theta 0 --out " + dro_dir.string()).code == 0);
  const nlohmann::json robust = read_result_json(dro_dir);
  const double ref = read_result_json(ref_dir)["value"].get<double>();
  REQUIRE(robust["value"].get<double>() == Catch::Approx(ref).margin(1e-7));
  // The monolithic reformulation exposes its per-atom epigraph certificates.
  REQUIRE(robust["diagnostics"]["sample_epigraphs"].size() == 20);
}

TEST_CASE("solve drrcp with a saturating radius falls back to the safest profit") {
  const fs::path out = work_dir() / "dro_sat";
  const RunResult r = run_cli("solve --problem " + sample_path("p1.problem") + " --data " +
                              grid20_csv() + " --mode drrcp --theta 50 --out " + out.string());
  REQUIRE(r.code == 0);
  const nlohmann::json j = read_result_json(out);
  REQUIRE(j["value"].get<double>() == Catch::Approx(-0.5).margin(1e-9));
  REQUIRE(j["x"][0].get<double>() == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("solve drccp tracks the chance frontier and reports the grid cell") {
  const fs::path out = work_dir() / "drccp";
  const RunResult r =
      run_cli("solve --problem " + sample_path("p1.problem") + " --data " + grid20_csv() +
              " --mode drccp --theta 0.0025 --out " + out.string());
  REQUIRE(r.code == 0);
  const nlohmann::json j = read_result_json(out);
  // Frontier for this instance: 1/x = 1.8 + 2 * sqrt(theta).
  REQUIRE(j["value"].get<double>() == Catch::Approx(-1.0 / 1.9).margin(2e-3));
  REQUIRE(j["t"].is_null());
  REQUIRE(j["diagnostics"]["method"] == "grid_search");
  REQUIRE(j["diagnostics"]["grid_cell"].get<double>() > 0.0);
  REQUIRE(j["diagnostics"]["lambda"].is_null());
}

TEST_CASE("alpha override changes the solved tail level") {
  const fs::path out = work_dir() / "alpha_half";
  const RunResult r =
      run_cli("solve --problem " + sample_path("p1.problem") + " --data " + grid20_csv() +
              " --mode rcp --alpha-override 0.5 --out " + out.string());
  REQUIRE(r.code == 0);
  const nlohmann::json j = read_result_json(out);
  REQUIRE(j["alpha"] == 0.5);
  // Mean of the worst half of the 20-point grid is 1.5.
  REQUIRE(j["value"].get<double>() == Catch::Approx(-1.0 / 1.5).margin(1e-9));
}

TEST_CASE("infeasible instances exit with code 2 and a null value") {
  const fs::path problem = work_dir() / "hopeless.problem";
  {
    std::ofstream os(problem);
    os << "drolab-problem v1\nn 1\nm 1\nobjective -1\nalpha 0.1\n"
          "x_lower 5\nx_upper 10\nsupport_lo 0\nsupport_hi 2\n"
          "piece\n  xi_coeff 0\n  xi_x_row 1\n  x_coeff 0\n  offset -1\nend\n";
  }
  const std::string base =
      "solve --problem " + problem.string() + " --data " + grid20_csv();

  const fs::path out = work_dir() / "hopeless_rcp";
  RunResult r = run_cli(base + " --mode rcp --out " + out.string());
  REQUIRE(r.code == 2);
  REQUIRE(r.out.find("status=infeasible") != std::string::npos);
  nlohmann::json j = read_result_json(out);
  REQUIRE(j["status"] == "infeasible");
  REQUIRE(j["value"].is_null());
  REQUIRE(j["t"].is_null());

  r = run_cli(base + " --mode drrcp --theta 0.1 --out " + (work_dir() / "h2").string());
  REQUIRE(r.code == 2);
  r = run_cli(base + " --mode drccp --theta 0.1 --out " + (work_dir() / "h3").string());
  REQUIRE(r.code == 2);
}

TEST_CASE("input mistakes exit with code 1 and name the offending field") {
  const std::string base = "solve --problem " + sample_path("p1.problem") + " --data " +
                           grid20_csv();
  RunResult r = run_cli(base + " --mode drrcp --theta -1 --out " + work_dir().string());
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find("--theta") != std::string::npos);

  r = run_cli(base + " --mode rcp --theta 0.5 --out " + work_dir().string());
  REQUIRE(r.code == 1);  // radius only makes sense for the robust modes

  r = run_cli(base + " --mode cvar --out " + work_dir().string());
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find("--mode") != std::string::npos);

  r = run_cli("solve --problem /nonexistent.problem --data " + grid20_csv() + " --mode rcp");
  REQUIRE(r.code == 1);

  r = run_cli("solve --badflag 1");
  REQUIRE(r.code == 1);

  r = run_cli("");
  REQUIRE(r.code == 1);  // a subcommand is required
}

TEST_CASE("dimension mismatches between problem and data are rejected") {
  const fs::path csv = work_dir() / "two_col.csv";
  {
    std::ofstream os(csv);
    os << "w,xi_1,xi_2\n0.5,0.1,0.2\n0.5,0.3,0.4\n";
  }
  const RunResult r = run_cli("solve --problem " + sample_path("p1.problem") + " --data " +
                              csv.string() + " --mode rcp --out " + work_dir().string());
  REQUIRE(r.code == 1);
}

TEST_CASE("wasserstein subcommand prints the distance to nine decimals") {
  const fs::path a = work_dir() / "a.csv";
  const fs::path b = work_dir() / "b.csv";
  write_csv_file(EmpiricalDistribution::from_samples({{0.0}, {1.0}}), a.string());
  write_csv_file(EmpiricalDistribution::from_samples({{1.0}, {3.0}}), b.string());
  const RunResult r = run_cli("wasserstein " + a.string() + " " + b.string());
  REQUIRE(r.code == 0);
  REQUIRE(r.out == "1.500000000\n");

  const fs::path c = work_dir() / "c.csv";
  write_csv_file(EmpiricalDistribution::from_samples({{1.0, 2.0}}), c.string());
  REQUIRE(run_cli("wasserstein " + a.string() + " " + c.string()).code == 1);
}

TEST_CASE("experiment runs both modes and its outputs are seed-deterministic") {
  const std::string config = tiny_experiment_config(ExperimentMode::Both);
  const fs::path run1 = work_dir() / "run1";
  const fs::path run2 = work_dir() / "run2";

  const RunResult r1 = run_cli("experiment --config " + config + " --jobs 1 --out " +
                               run1.string());
  REQUIRE(r1.code == 0);
  REQUIRE(r1.out.find("consistency report (drrcp)") != std::string::npos);
  REQUIRE(r1.out.find("consistency report (drccp)") != std::string::npos);
  for (const char* name : {"traces_drrcp.csv", "report_drrcp.json", "report_drrcp.txt",
                           "traces_drccp.csv", "report_drccp.json", "report_drccp.txt"})
    REQUIRE(fs::exists(run1 / name));

  const RunResult r2 = run_cli("experiment --config " + config + " --jobs 4 --out " +
                               run2.string());
  REQUIRE(r2.code == 0);
  for (const char* name : {"traces_drrcp.csv", "traces_drccp.csv"})
    REQUIRE(strip_last_column(slurp(run1 / name)) == strip_last_column(slurp(run2 / name)));
  for (const char* name : {"report_drrcp.txt", "report_drccp.txt"})
    REQUIRE(slurp(run1 / name) == slurp(run2 / name));

  // Overriding the seed must actually change the sampled paths.
  const fs::path run3 = work_dir() / "run3";
  REQUIRE(run_cli("experiment --config " + config + " --seed 99 --out " + run3.string())
              .code == 0);
  REQUIRE(strip_last_column(slurp(run1 / "traces_drrcp.csv")) !=
          strip_last_column(slurp(run3 / "traces_drrcp.csv")));
}

TEST_CASE("report subcommand reproduces the experiment's analysis from traces") {
  const std::string config = tiny_experiment_config(ExperimentMode::Drrcp);
  const fs::path run = work_dir() / "rep_base";
  REQUIRE(run_cli("experiment --config " + config + " --out " + run.string()).code == 0);

  const fs::path rep = work_dir() / "rep_again";
  const RunResult r = run_cli("report --config " + config + " --traces " +
                              (run / "traces_drrcp.csv").string() + " --out " + rep.string());
  REQUIRE(r.code == 0);
  REQUIRE(slurp(rep / "report_drrcp.txt") == slurp(run / "report_drrcp.txt"));

  // A both-mode config is ambiguous without an explicit mode choice.
  const std::string both_config = tiny_experiment_config(ExperimentMode::Both);
  RunResult ambiguous = run_cli("report --config " + both_config + " --traces " +
                                (run / "traces_drrcp.csv").string() + " --out " +
                                (work_dir() / "rep_amb").string());
  REQUIRE(ambiguous.code == 1);
  ambiguous = run_cli("report --config " + both_config + " --mode drrcp --traces " +
                      (run / "traces_drrcp.csv").string() + " --out " +
                      (work_dir() / "rep_amb2").string());
  REQUIRE(ambiguous.code == 0);
}

TEST_CASE("output directory falls back to the environment variable") {
  const fs::path out = work_dir() / "env_out";
  const std::string cmd = "DROLAB_OUT_DIR=" + out.string() + " " + DROLAB_CLI_PATH +
                          " solve --problem " + sample_path("p1.problem") + " --data " +
                          grid20_csv() + " --mode rcp > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  REQUIRE(WEXITSTATUS(status) == 0);
  REQUIRE(fs::exists(out / "result.json"));
}

TEST_CASE("selftest subcommand passes on a healthy build") {
  const RunResult r = run_cli("selftest");
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("all suites passed") != std::string::npos);
}
