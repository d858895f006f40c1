#pragma once

#include <cmath>
#include <limits>
#include <optional>

#include "ffo/types.hpp"

namespace ffo {

/// Primal-dual point returned by lower-level solves.
///
/// For a certified solution all three residuals are at or below the tolerance
/// the producing solver was asked for (recorded in `tol`). Solves that hit
/// their iteration cap return the best iterate with `certified = false` and
/// the residuals actually achieved.
struct PrimalDualSolution {
  Vector y;       ///< primal point
  Vector lambda;  ///< inequality multipliers, lambda >= 0
  Vector nu;      ///< equality multipliers

  /// ||grad_y g + h_jac_y^T lambda + e_jac_y^T nu||_2
  double stationarity_residual = std::numeric_limits<double>::infinity();
  /// ||lambda .* h||_inf
  double comp_slack_residual = std::numeric_limits<double>::infinity();
  /// max(||e||_inf, max_i h_i^+)
  double feasibility_residual = std::numeric_limits<double>::infinity();

  int iterations = 0;
  double wall_time_s = 0.0;
  bool certified = false;
  double tol = std::numeric_limits<double>::quiet_NaN();

  double max_residual() const {
    return std::max(stationarity_residual,
                    std::max(comp_slack_residual, feasibility_residual));
  }
};

struct SolverConfig {
  double tol = 1e-10;
  int max_iter = 100;
  std::optional<PrimalDualSolution> warm_start;
};

/// Problem data of a quadratic lower level frozen at one parameter value:
///   min_y 1/2 y^T Q y + q^T y   s.t.  G y <= h,  A y = b.
/// Problems whose objective is quadratic and whose constraints are affine in
/// y expose a snapshot callback so the interior-point path can be used even
/// when the x-dependence is not the ParametricQp form.
struct QpSnapshot {
  Matrix Q;
  Vector q;
  Matrix G;
  Vector h;
  Matrix A;
  Vector b;
};

}  // namespace ffo
