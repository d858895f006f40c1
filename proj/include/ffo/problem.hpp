#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "ffo/solver_types.hpp"
#include "ffo/types.hpp"

namespace ffo {

struct BilevelProblem;

/// Quadratic lower level with affine parameter coupling:
///
///   g(x, y) = 1/2 y^T Q y + (q0 + P x)^T y
///   h(x, y) = G_ineq y - h0 - H_x x  <= 0
///   e(x, y) = A_eq  y - b0 - B_x x   = 0
///
/// Q must be SPD. Matrices serialize row-major.
struct ParametricQp {
  Matrix Q;       // d x d
  Matrix P;       // d x dim_x
  Vector q0;      // d
  Matrix G_ineq;  // m x d
  Vector h0;      // m
  Matrix H_x;     // m x dim_x
  Matrix A_eq;    // p x d
  Vector b0;      // p
  Matrix B_x;     // p x dim_x

  int d() const { return static_cast<int>(Q.rows()); }
  int dim_x() const { return static_cast<int>(P.cols()); }
  int m() const { return static_cast<int>(G_ineq.rows()); }
  int p() const { return static_cast<int>(A_eq.rows()); }

  Vector q_of(const Vector& x) const { return q0 + P * x; }
  Vector h_rhs(const Vector& x) const { return h0 + H_x * x; }
  Vector b_rhs(const Vector& x) const { return b0 + B_x * x; }
};

void to_json(nlohmann::json& j, const ParametricQp& qp);
void from_json(const nlohmann::json& j, ParametricQp& qp);

/// Regularized linear program whose constraint data is the parameter:
///
///   g(x, y) = epsilon_reg/2 ||y||^2 + linear_cost^T y
///   e(x, y) = A(x) y - b(x) = 0
///   h(x, y) = -y <= 0              (when nonnegativity is set)
///
/// A(x) and b(x) are affine in x: vec_rowmajor(A(x)) = A0_vec + W_A x and
/// b(x) = b0 + W_b x. The common case is a direct reshape of x into the
/// constraint data (see `direct_reshape`).
struct ConstraintParamLp {
  double epsilon_reg = 1e-2;
  Vector linear_cost;  // d
  int rows = 0;        // p
  int dim = 0;         // d
  Vector A0_vec;       // p*d
  Matrix W_A;          // (p*d) x dim_x
  Vector b0;           // p
  Matrix W_b;          // p x dim_x
  bool nonnegativity = true;

  int dim_x() const { return static_cast<int>(W_A.cols()); }

  Matrix A_of(const Vector& x) const;
  Vector b_of(const Vector& x) const;

  /// x = [vec_rowmajor(A); b], i.e. the parameter IS the constraint data.
  static ConstraintParamLp direct_reshape(int rows, int dim, double epsilon_reg,
                                          Vector linear_cost,
                                          bool nonnegativity = true);
};

/// Convex lower-level problem
///
///   y*(x) = argmin_y g(x, y)   s.t.  h(x, y) <= 0,  e(x, y) = 0
///
/// with g strongly convex in y (modulus mu_g > 0) and e affine in y.
/// Everything is exposed through callbacks; the structure tags at the bottom
/// let the solver pick specialized methods without changing semantics.
struct BilevelProblem {
  int dim_y = 0;
  int dim_x = 0;
  int n_ineq = 0;
  int n_eq = 0;
  double mu_g = 0.0;

  // -- first-order callbacks (required; h_*/e_* required when present) ------
  std::function<double(const Vector&, const Vector&)> g_value;
  std::function<Vector(const Vector&, const Vector&)> g_grad_y;
  std::function<Vector(const Vector&, const Vector&)> g_grad_x;
  std::function<Vector(const Vector&, const Vector&)> h_values;  // m
  std::function<Matrix(const Vector&, const Vector&)> h_jac_y;   // m x dim_y
  std::function<Matrix(const Vector&, const Vector&)> h_jac_x;   // m x dim_x
  std::function<Vector(const Vector&, const Vector&)> e_values;  // p
  std::function<Matrix(const Vector&, const Vector&)> e_jac_y;   // p x dim_y
  std::function<Matrix(const Vector&, const Vector&)> e_jac_x;   // p x dim_x

  // -- second-order callbacks (exact oracles and Newton refinement) ---------
  std::function<Matrix(const Vector&, const Vector&)> g_hess_yy;  // d x d
  std::function<Matrix(const Vector&, const Vector&)> g_hess_yx;  // d x dim_x

  // y/x second derivatives of the Lagrangian g + lambda^T h + nu^T e.
  // Defaults (when unset) are the g Hessians, which is exact whenever the
  // constraints are affine in y and x. Problems with curved or
  // parameter-coupled constraints must supply these for exact oracles.
  std::function<Matrix(const Vector& x, const Vector& y, const Vector& lambda,
                       const Vector& nu)>
      lag_hess_yy;
  std::function<Matrix(const Vector& x, const Vector& y, const Vector& lambda,
                       const Vector& nu)>
      lag_hess_yx;

  // -- structure tags --------------------------------------------------------
  /// Set when the problem was built from ParametricQp data.
  std::shared_ptr<const ParametricQp> qp;
  /// Quadratic-in-y snapshot at fixed x, when the problem admits one.
  std::function<QpSnapshot(const Vector& x)> qp_form;
  /// Closed-form or otherwise specialized solver attached to a preset.
  std::function<PrimalDualSolution(const BilevelProblem&, const Vector& x,
                                   const SolverConfig&)>
      specialized_solver;

  Matrix lagrangian_hess_yy(const Vector& x, const Vector& y,
                            const Vector& lambda, const Vector& nu) const;
  Matrix lagrangian_hess_yx(const Vector& x, const Vector& y,
                            const Vector& lambda, const Vector& nu) const;
};

/// Builds the callback problem for QP data. Throws NotPositiveDefinite if Q
/// fails Cholesky, DimensionMismatch on inconsistent shapes.
BilevelProblem make_parametric_qp(ParametricQp qp);

/// Builds the callback problem for constraint-parametrized LP data.
BilevelProblem make_constraint_lp(ConstraintParamLp lp);

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct PresetSpec {
  std::string name;  // "wall" | "circle" | "random-qp"
  double a = 100.0;  // wall slope, a > 1
  std::uint64_t seed = 0;
  int d = 4;
  int m = 2;
  int p = 0;
};

/// 1-D fixture: g = 1/2 (y - a)^2, h = y - a x <= 0. For x slightly below 1
/// the constraint is active with y* = a x, dy*/dx = a; at x = 1 the problem
/// is exactly degenerate (lambda* = 0 and h = 0).
BilevelProblem preset_wall(double a);

/// 1-D fixture with a curved constraint: g = (y - 2)^2, h = x^2 + y^2 - 1.
/// The constraint is active for all |x| < 1 with y* = sqrt(1 - x^2); an exact
/// specialized solver is attached.
BilevelProblem preset_circle();

/// Well-conditioned random QP (cond(Q) <= 100) with a strictly feasible
/// region, anchored so that a small number of inequalities is active at
/// x = 0. Deterministic: identical arguments yield bit-identical data.
BilevelProblem preset_random_qp(std::uint64_t seed, int d, int m, int p);

/// Dispatch by name; throws UnknownPreset.
BilevelProblem preset(const PresetSpec& spec);

// ---------------------------------------------------------------------------
// Validation helpers (probabilistic consistency checks, used by tests and
// available behind a flag for debugging new problem definitions).
// ---------------------------------------------------------------------------

/// Checks at `n_points` random (x, y) pairs that e is affine in y (constant
/// e_jac_y), that g_hess_yy is symmetric with lambda_min >= mu_g - tol, and
/// that analytic jacobians match central finite differences. Throws Error on
/// violation.
void validate_problem(const BilevelProblem& problem, std::uint64_t seed = 0,
                      int n_points = 3, double tol = 1e-5);

}  // namespace ffo
