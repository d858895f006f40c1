#pragma once

#include <nlohmann/json.hpp>

#include "ffo/active_set.hpp"
#include "ffo/problem.hpp"
#include "ffo/solver.hpp"
#include "ffo/types.hpp"

namespace ffo {

// ---------------------------------------------------------------------------
// Hypergradients of F(x) = f(y*(x), x) through the constrained lower level.
// The caller supplies c = dF/dy* evaluated at the solve (objective-agnostic)
// and the direct term grad_x f; grad = v_x + direct_term always holds
// structurally.
// ---------------------------------------------------------------------------

struct HypergradientReport {
  Vector grad;
  Vector v_x;
  Vector direct_term;
  double delta = 0.0;
  ActiveSet active;
  struct Timings {
    double forward_s = 0.0;
    double perturbed_s = 0.0;
    double assembly_s = 0.0;
  } timings;
  bool certified = false;
  /// classical strict-complementarity margin at the base solution
  double comp_margin = std::numeric_limits<double>::infinity();
  bool rank_certified = false;
};

void to_json(nlohmann::json& j, const HypergradientReport& r);

/// Projection onto the nullspace of B in the metric G:
///   argmin_{B y = 0} (y - z)^T G (y - z),
/// computed through one saddle solve. G must be SPD on ker B.
Vector project_metric_nullspace(const Matrix& metric, const Matrix& B,
                                const Vector& z);

/// Solution sensitivity of the ghost problem at its base point:
///   dy*/dx = P (-hess_yy^{-1} hess_yx) + (I - P) pinv(B~) (-A~)
/// where P is the metric nullspace projection for metric hess_yy and the
/// least-squares term uses the pseudo-inverse of B~. Requires
/// ghost.rank_certified; hess_yy must be SPD.
Matrix projection_jacobian(const GhostProblem& ghost, const Matrix& hess_yy,
                           const Matrix& hess_yx);

/// Implicit differentiation through the full KKT system: forms the Jacobian
/// of the KKT map at (y*, lambda*, nu*, x), solves against the x-derivative
/// block and returns the y rows (dy*/dx, d x dim_x). Throws SingularKkt when
/// the factorization detects rank deficiency or `active` is degenerate.
Matrix exact_jacobian(const BilevelProblem& problem, const Vector& x,
                      const PrimalDualSolution& sol, const ActiveSet& active);

/// Reference hypergradient: solves the lower level, then
/// grad = direct + exact_jacobian^T c.
Vector exact_hypergradient(const BilevelProblem& problem, const Vector& x,
                           const Vector& c, const Vector& direct,
                           const SolverConfig& cfg = {});

/// Minimizes g~(x, y) + delta c^T y over {y : B~ (y - base_y) +
/// A~ (x - base_x) = 0}, warm-started from base_y. The solve is a reduced
/// (nullspace-parametrized) fixed-step gradient descent: the estimator's
/// error law relies on the returned point tracking the requested tolerance,
/// which a direct factorization would not provide. Equality multipliers are
/// recovered into `nu`.
PrimalDualSolution solve_perturbed(const GhostProblem& ghost, const Vector& x,
                                   const Vector& c, double delta,
                                   const SolverConfig& cfg);

/// Least-squares multiplier recovery
///   mult = - pinv(B~^T) (grad_y g~(x, y) + extra_lin)
/// via SVD; pass extra_lin = delta * c when recovering duals of a perturbed
/// solve. Returns an empty vector when the ghost has no constraint rows.
Vector recover_dual(const GhostProblem& ghost, const Vector& x, const Vector& y,
                    const Vector& extra_lin = Vector());

/// Two-point finite-difference read-out of the hypergradient:
///   v_x = 1/delta * ( grad_x[g~](x, y_delta) + A~^T mult_delta
///                   - grad_x[g~](x, y_base ) - A~^T mult_base )
/// where grad_x of the constraint inner products reduces to A~^T mult.
Vector finite_diff_vx(const GhostProblem& ghost, const Vector& x,
                      const PrimalDualSolution& base, const Vector& mult_base,
                      const PrimalDualSolution& perturbed,
                      const Vector& mult_delta, double delta);

struct FfoOptions {
  /// target accuracy; the probe size is delta = clamp(eps, 1e-8, 1e-2)
  double eps = 1e-4;
  double tol_act = 1e-6;
  SolverConfig solver;
  /// propagate DegenerateActiveSet / LicqViolation instead of downgrading
  bool strict = false;
};

/// First-order hypergradient estimator: forward solve, active-set
/// identification, ghost reduction, one perturbed solve with inner tolerance
/// min(cfg.tol, delta^2 * 1e-2), dual recovery, finite-difference read-out.
/// Degeneracy or rank failure downgrade certification but never throw (unless
/// strict); solver failures propagate.
HypergradientReport ffo_hypergradient(const BilevelProblem& problem,
                                      const Vector& x, const Vector& c,
                                      const Vector& direct,
                                      const FfoOptions& opts = {});

/// Same estimator starting from an existing certified forward solution
/// (used by the benchmark to time forward and backward phases separately).
HypergradientReport ffo_from_solution(const BilevelProblem& problem,
                                      const Vector& x, const Vector& c,
                                      const Vector& direct,
                                      const PrimalDualSolution& sol,
                                      const FfoOptions& opts = {});

}  // namespace ffo
