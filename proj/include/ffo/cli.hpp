#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ffo/types.hpp"

namespace ffo {

// ---------------------------------------------------------------------------
// Benchmark / comparison driver behind the command-line tool. Subcommands are
// plain functions over RunConfig so they can be exercised directly in tests.
// Exit codes: 0 success, 1 comparison above bound or no loss decrease,
// 2 solver failure, 3 degeneracy detected in strict mode.
// ---------------------------------------------------------------------------

struct RunConfig {
  // problem selection
  std::string preset = "wall";  // wall | circle | random-qp
  std::string problem_file;     // JSON ParametricQp; overrides preset
  double a = 100.0;
  std::uint64_t seed = 0;
  int d = 4;
  int m = 2;
  int p = 0;
  std::vector<double> x;  // evaluation point; defaults per preset

  // compare
  double delta = 1e-4;  // probe size / estimator accuracy target
  double bound = -1.0;  // pairwise error bound; < 0 selects the default
  bool strict = false;

  // train
  std::string task = "dfl";  // dfl | sudoku
  std::string oracle = "ffo";
  int steps = 100;
  double lr = -1.0;  // < 0 selects the per-task default (dfl 0.05, sudoku 1e-4)
  double eps = 1e-4;
  int n = 4;             // sudoku side length
  int n_samples = 20;
  double epsilon_reg = 1e-2;

  // bench
  std::vector<int> sizes = {10, 50, 200};
  int reps = 5;

  // output; empty writes to stdout
  std::string out;
};

int cmd_compare(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg);
int cmd_preset_info(const RunConfig& cfg);

}  // namespace ffo
