#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "ffo/problem.hpp"
#include "ffo/solver_types.hpp"
#include "ffo/types.hpp"

namespace ffo {

/// Active inequality set at a certified primal-dual solution.
struct ActiveSet {
  std::vector<int> indices;  ///< sorted active inequality indices
  /// min over ambiguous-band indices of max(lambda_i, -h_i); +inf if the band
  /// is empty. An index is in the band when both lambda_i and -h_i fall
  /// inside [0, tol_act].
  double margin = std::numeric_limits<double>::infinity();
  bool degenerate = false;
  double tol_act = 0.0;  ///< threshold the classification was made with

  bool contains(int i) const;
};

/// Classifies each inequality: active if lambda_i > tol_act, inactive if
/// -h_i > tol_act, and inside the ambiguous band by whichever of lambda_i,
/// -h_i is larger (degenerate flag set for band indices). Requires `sol`
/// certified with residuals <= 100 * tol_act^2, else UncertifiedSolution.
ActiveSet identify_active(const BilevelProblem& problem, const Vector& x,
                          const PrimalDualSolution& sol,
                          double tol_act = 1e-6);

/// Classical strict-complementarity margin min_i max(lambda_i, -h_i(x, y));
/// +inf when there are no inequalities.
double complementarity_margin(const BilevelProblem& problem, const Vector& x,
                              const PrimalDualSolution& sol);

// ---------------------------------------------------------------------------
// Ghost problem: the equality-constrained reduction at a base solution.
//
// Objective  g~(x, y) = g(x, y) + lambda*^T h(x, y) + nu*^T e(x, y)
// Constraint rows     = A~ (x - base_x) + B~ (y - base_y) = 0, where
//   B~ = [e_jac_y; h_jac_y restricted to the active set]  at (base_x, base_y)
//   A~ = [e_jac_x; h_jac_x restricted to the active set]  at (base_x, base_y).
//
// At base_x the base point is optimal for the ghost inner problem with zero
// constraint multipliers, and first-order sensitivities of its solution match
// the original problem's.
// ---------------------------------------------------------------------------

struct GhostProblem {
  int dim_y = 0;
  int dim_x = 0;
  Matrix B_tilde;  // (p + |I|) x dim_y
  Matrix A_tilde;  // (p + |I|) x dim_x
  Vector base_x;
  Vector base_y;
  Vector lambda_star;  // frozen multipliers (all m entries)
  Vector nu_star;
  ActiveSet active;
  /// smallest singular value of B_tilde >= 1e-8 * ||B_tilde||_2
  bool rank_certified = false;

  std::function<double(const Vector&, const Vector&)> g_value;   // g~
  std::function<Vector(const Vector&, const Vector&)> g_grad_y;
  std::function<Vector(const Vector&, const Vector&)> g_grad_x;
  /// y/y and y/x second derivatives of g~ (source Lagrangian Hessians with
  /// frozen multipliers); present whenever the source problem has them.
  std::function<Matrix(const Vector&, const Vector&)> hess_yy;
  std::function<Matrix(const Vector&, const Vector&)> hess_yx;

  int n_rows() const { return static_cast<int>(B_tilde.rows()); }

  /// Constraint values A~ (x - base_x) + B~ (y - base_y).
  Vector constraint_values(const Vector& x, const Vector& y) const;
};

struct GhostOptions {
  /// In strict mode a degenerate active set raises DegenerateActiveSet and a
  /// rank-deficient B~ raises LicqViolation; otherwise the ghost is built
  /// anyway with rank_certified = false.
  bool strict = false;
  double rank_rtol = 1e-8;
};

GhostProblem build_ghost(const BilevelProblem& problem, const Vector& x,
                         const PrimalDualSolution& sol, const ActiveSet& active,
                         const GhostOptions& opts = {});

/// Re-expresses the ghost inner problem as a BilevelProblem (equality
/// constraints only) so the exact oracles can run on it for cross-checks.
BilevelProblem ghost_as_bilevel(const GhostProblem& ghost);

}  // namespace ffo
