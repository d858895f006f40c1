#pragma once

#include <cstdint>

#include "ffo/hypergradient.hpp"
#include "ffo/problem.hpp"
#include "ffo/types.hpp"

namespace ffo {

// ---------------------------------------------------------------------------
// Randomized-smoothing estimator for problems at or near degeneracy, where a
// single active-set reduction is unreliable: average the first-order
// estimator over problems whose inequality right-hand sides are shifted by
// eta ~ U(-rho, rho)^m, each sample drawn from an independent stream keyed by
// (seed, sample index). Inequality rows of quadratic problems are 2-norm
// normalized before sampling so rho means the same thing for every row;
// raw-callback problems are sampled unnormalized.
// ---------------------------------------------------------------------------

struct SmoothedConfig {
  double rho = 1e-2;
  int n_samples = 100;
  std::uint64_t seed = 0;
  /// per-sample estimator accuracy; <= 0 selects the default rho * 1e-3 / m
  double inner_eps = -1.0;
  double tol_act = 1e-6;
  SolverConfig solver;
};

struct SmoothedReport {
  Vector grad;          ///< sample mean of per-sample hypergradients
  Vector stderr_;       ///< per-coordinate standard error of the mean
  int n_samples = 0;
  int n_degenerate = 0; ///< samples flagged degenerate (retained in the mean)
  double wall_time_s = 0.0;
};

/// Throws Infeasible if a shifted problem loses feasibility (rho too large
/// for the geometry); solver errors propagate.
SmoothedReport smoothed_hypergradient(const BilevelProblem& problem,
                                      const Vector& x, const Vector& c,
                                      const Vector& direct,
                                      const SmoothedConfig& cfg);

}  // namespace ffo
