#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffo/hypergradient.hpp"
#include "ffo/problem.hpp"
#include "ffo/smoothed.hpp"
#include "ffo/types.hpp"

namespace ffo {

enum class OracleKind { exact, ffo, smoothed };

const char* oracle_name(OracleKind kind);
OracleKind parse_oracle(const std::string& name);  // throws Error

/// A supervised bilevel training task: per-instance lower-level problems, an
/// explicit parameter map x_i(theta) with its adjoint, and an outer loss on
/// the lower-level solution. The hypergradient oracles act on x; the chain
/// callback folds their output back into theta space.
struct TaskSpec {
  std::string name;
  std::vector<Vector> features;
  std::vector<Vector> targets;
  /// one shared problem or one per instance
  std::vector<BilevelProblem> problems;
  Vector theta0;

  /// x_i(theta)
  std::function<Vector(const Vector& theta, int i)> param_of;
  /// (dx_i/dtheta)^T g_x
  std::function<Vector(const Vector& g_x, const Vector& theta, int i)>
      chain_to_theta;
  /// (loss, c = dloss/dy) at a lower-level solution of instance i
  std::function<std::pair<double, Vector>(const Vector& y, int i)>
      loss_and_grad;

  /// generating data, used for reproducibility fingerprints
  nlohmann::json meta;

  int n() const { return static_cast<int>(targets.size()); }
  int theta_dim() const { return static_cast<int>(theta0.size()); }
  const BilevelProblem& problem_of(int i) const {
    return problems.size() == 1 ? problems[0] : problems[static_cast<size_t>(i)];
  }
};

struct TrainRecord {
  int step = 0;
  double loss = 0.0;       // mean batch loss at the pre-step parameters
  double grad_norm = 0.0;  // ||mean theta-gradient||_2
  double forward_s = 0.0;
  double backward_s = 0.0;
  std::string oracle;
};

struct TrainTrace {
  std::vector<TrainRecord> records;
  Vector theta_final;
  std::string oracle;

  double initial_loss() const { return records.front().loss; }
  double final_loss() const { return records.back().loss; }
};

/// CSV with header "step,loss,grad_norm,forward_s,backward_s,oracle".
void write_csv(std::ostream& os, const TrainTrace& trace);

struct TrainOptions {
  int steps = 100;
  double lr = 0.05;
  double eps = 1e-4;  // first-order estimator accuracy target
  std::uint64_t seed = 0;
  OracleKind oracle = OracleKind::ffo;
  int batch_size = -1;  // <= 0: full batch
  SolverConfig solver{1e-8, 200, std::nullopt};
  SmoothedConfig smoothed{1e-3, 30, 0, -1.0, 1e-6, SolverConfig{1e-8, 200, std::nullopt}};
};

/// Mean loss and mean theta-gradient of a batch at fixed parameters.
/// Also reports the accumulated forward/backward wall time split.
struct BatchGradient {
  Vector grad;
  double loss = 0.0;
  double forward_s = 0.0;
  double backward_s = 0.0;
};
BatchGradient batch_gradient(const TaskSpec& task, const Vector& theta,
                             const std::vector<int>& batch, OracleKind oracle,
                             const TrainOptions& opts);

/// Plain gradient descent on theta. Deterministic given opts.seed (batch
/// shuffling and any sampling oracles derive their streams from it).
TrainTrace train(const TaskSpec& task, const TrainOptions& opts);

// ---------------------------------------------------------------------------
// Task builders
// ---------------------------------------------------------------------------

/// Decision-focused learning on a fixed QP: the model predicts the linear
/// cost of the lower level from a feature vector through an affine map
/// theta = (W, b), the outer loss is target^T y*. Draws a fixed SPD Q
/// (condition <= 100), inequalities with a strictly feasible region, Gaussian
/// features and targets.
TaskSpec dfl_task(std::uint64_t seed, int n_samples, int feat_dim, int dim_y,
                  int m_ineq);

/// Constraint learning on one-hot grid puzzles: the lower level is a
/// regularized LP whose equality data A(theta), b(theta) is the learned
/// parameter (direct reshape), the clue indicator enters the linear cost and
/// the outer loss is ||y* - y_i||^2. Puzzles are generated by permuting a
/// base valid grid and masking cells while the completion stays unique.
TaskSpec sudoku_task(int n, int n_samples, double epsilon_reg,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Grid-puzzle utilities (shared by the task builder and its tests)
// ---------------------------------------------------------------------------

struct SudokuInstance {
  std::vector<int> puzzle;    // row-major n x n, 0 = blank, digits 1..n
  std::vector<int> solution;  // completed grid
};

/// Backtracking solution counter, stops at `cap`. The generator uses it to
/// certify uniqueness; tests use it as an independent oracle.
int count_sudoku_solutions(const std::vector<int>& puzzle, int n, int cap = 2);

std::vector<SudokuInstance> generate_sudoku(int n, int count,
                                            std::uint64_t seed);

/// One-hot encoding of a grid into R^{n^3}; blanks map to zero blocks.
Vector grid_one_hot(const std::vector<int>& grid, int n);

}  // namespace ffo
