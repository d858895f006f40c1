#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "ffo/cli.hpp"
#include "ffo/problem.hpp"

using namespace ffo;
using nlohmann::json;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("cli_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

json read_json(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  json j;
  is >> j;
  return j;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("compare: wall fixture exits clean with the full report") {
  TempFile out("compare.json");
  RunConfig cfg;
  cfg.preset = "wall";
  cfg.a = 100.0;
  cfg.x = {0.9};
  cfg.delta = 1e-4;
  cfg.out = out.path;
  REQUIRE(cmd_compare(cfg) == 0);

  const json j = read_json(out.path);
  for (const char* key :
       {"preset", "x", "delta", "bound", "grad_ffo", "grad_exact", "grad_proj",
        "grad_fd", "errors", "max_error", "certified", "timings"})
    CHECK(j.contains(key));
  CHECK(j["preset"] == "wall");
  CHECK(j["certified"].get<bool>());
  CHECK(j["grad_ffo"][0].get<double>() == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(j["grad_exact"][0].get<double>() ==
        doctest::Approx(100.0).epsilon(1e-9));
  for (const char* key : {"ffo_exact", "ffo_proj", "ffo_fd", "exact_proj",
                          "exact_fd", "proj_fd"})
    CHECK(j["errors"].contains(key));
  CHECK(j["max_error"].get<double>() <= j["bound"].get<double>());
  for (const char* key :
       {"forward_s", "ffo_backward_s", "exact_s", "proj_s", "fd_s"})
    CHECK(j["timings"].contains(key));
}

TEST_CASE("compare: an unreachable bound flips the exit code") {
  TempFile out("compare_bound.json");
  RunConfig cfg;
  cfg.preset = "random-qp";
  cfg.seed = 7;
  cfg.d = 6;
  cfg.m = 3;
  cfg.bound = 1e-18;
  cfg.out = out.path;
  CHECK(cmd_compare(cfg) == 1);
  const json j = read_json(out.path);  // the report is still written
  CHECK(j["max_error"].get<double>() > 1e-18);
}

TEST_CASE("compare: strict degeneracy maps to exit 3") {
  RunConfig cfg;
  cfg.preset = "wall";
  cfg.x = {1.0};
  cfg.strict = true;
  cfg.out = "cli_test_strict.json";
  CHECK(cmd_compare(cfg) == 3);
  std::remove(cfg.out.c_str());

  // Non-strict: the report is still written with certification dropped; the
  // square-KKT oracle is undefined there and omitted from the error pairs.
  // The surviving oracles straddle the kink differently, so the bound gate
  // reports disagreement.
  cfg.strict = false;
  TempFile out("nonstrict.json");
  cfg.out = out.path;
  CHECK(cmd_compare(cfg) == 1);
  const json j = read_json(out.path);
  CHECK_FALSE(j["certified"].get<bool>());
  CHECK(j["grad_exact"].is_null());
  CHECK_FALSE(j["errors"].contains("ffo_exact"));
  CHECK(j["errors"].contains("ffo_fd"));
}

TEST_CASE("compare: unknown preset maps to exit 2") {
  RunConfig cfg;
  cfg.preset = "nope";
  CHECK(cmd_compare(cfg) == 2);
}

TEST_CASE("compare: reads problem data from a file") {
  const BilevelProblem pb = preset_random_qp(3, 5, 3, 1);
  REQUIRE(pb.qp);
  TempFile problem("problem.json");
  {
    std::ofstream os(problem.path);
    os << json(*pb.qp);
  }
  TempFile out("compare_file.json");
  RunConfig cfg;
  cfg.problem_file = problem.path;
  cfg.x = std::vector<double>(static_cast<size_t>(pb.dim_x), 0.0);
  cfg.out = out.path;
  CHECK(cmd_compare(cfg) == 0);
  CHECK(read_json(out.path)["preset"] == problem.path);
}

TEST_CASE("train: the quick task descends and logs one row per step") {
  TempFile out("train.csv");
  RunConfig cfg;
  cfg.task = "dfl";
  cfg.oracle = "exact";
  cfg.steps = 10;
  cfg.n_samples = 6;
  cfg.d = 4;
  cfg.m = 2;
  cfg.out = out.path;
  REQUIRE(cmd_train(cfg) == 0);
  const auto lines = read_lines(out.path);
  REQUIRE(lines.size() == 11);
  CHECK(lines[0] == "step,loss,grad_norm,forward_s,backward_s,oracle");
  CHECK(lines[1].substr(0, 2) == "0,");
  CHECK(lines[10].substr(0, 2) == "9,");
}

TEST_CASE("train: puzzle task picks its own default step size and descends") {
  TempFile out("train_sudoku.csv");
  RunConfig cfg;
  cfg.task = "sudoku";
  cfg.oracle = "ffo";
  cfg.steps = 3;
  cfg.n_samples = 2;
  REQUIRE(cfg.lr < 0.0);  // leave the per-task default in charge
  cfg.out = out.path;
  REQUIRE(cmd_train(cfg) == 0);
  const auto lines = read_lines(out.path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "step,loss,grad_norm,forward_s,backward_s,oracle");
}

TEST_CASE("train: a single step cannot decrease and exits 1") {
  TempFile out("train_one.csv");
  RunConfig cfg;
  cfg.task = "dfl";
  cfg.oracle = "exact";
  cfg.steps = 1;
  cfg.lr = 0.0;
  cfg.n_samples = 4;
  cfg.out = out.path;
  CHECK(cmd_train(cfg) == 1);
  const auto lines = read_lines(out.path);
  REQUIRE(lines.size() == 2);
}

TEST_CASE("train: unknown task or oracle maps to exit 2") {
  RunConfig cfg;
  cfg.task = "nope";
  CHECK(cmd_train(cfg) == 2);
  cfg.task = "dfl";
  cfg.oracle = "nope";
  CHECK(cmd_train(cfg) == 2);
}

TEST_CASE("bench: one row per size with the pinned header") {
  TempFile out("bench.csv");
  RunConfig cfg;
  cfg.sizes = {4, 6};
  cfg.reps = 3;
  cfg.out = out.path;
  REQUIRE(cmd_bench(cfg) == 0);
  const auto lines = read_lines(out.path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "size,forward_s,ffo_backward_s,exact_backward_s");
  CHECK(lines[1].substr(0, 2) == "4,");
  CHECK(lines[2].substr(0, 2) == "6,");
  for (size_t k = 1; k < lines.size(); ++k) {
    std::istringstream row(lines[k]);
    std::string field;
    int fields = 0;
    while (std::getline(row, field, ',')) {
      ++fields;
      if (fields > 1) CHECK(std::stod(field) >= 0.0);
    }
    CHECK(fields == 4);
  }
}

TEST_CASE("bench: rejects a non-increasing size list") {
  RunConfig cfg;
  cfg.sizes = {6, 4};
  CHECK(cmd_bench(cfg) == 2);
  cfg.sizes = {};
  CHECK(cmd_bench(cfg) == 2);
}

TEST_CASE("preset-info: reports the problem shape") {
  TempFile out("info.json");
  RunConfig cfg;
  cfg.preset = "circle";
  cfg.out = out.path;
  REQUIRE(cmd_preset_info(cfg) == 0);
  json j = read_json(out.path);
  CHECK(j["dim_y"] == 1);
  CHECK(j["dim_x"] == 1);
  CHECK(j["n_ineq"] == 1);
  CHECK(j["has_specialized_solver"].get<bool>());

  cfg.preset = "wall";
  REQUIRE(cmd_preset_info(cfg) == 0);
  j = read_json(out.path);
  CHECK(j["has_qp_form"].get<bool>());
  CHECK(j.contains("qp"));
  CHECK(j["mu_g"].get<double>() == doctest::Approx(1.0));
  CHECK(j["default_x"][0].get<double>() == doctest::Approx(0.9));
}
