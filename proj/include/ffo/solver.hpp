#pragma once

#include <memory>

#include "ffo/problem.hpp"
#include "ffo/solver_types.hpp"
#include "ffo/types.hpp"

namespace ffo {

/// KKT residual triple of (y, lambda, nu) for a problem at x.
struct KktResidual {
  double stationarity = 0.0;  // ||grad_y g + h_jac_y^T lambda + e_jac_y^T nu||_2
  double comp_slack = 0.0;    // ||lambda .* h||_inf
  double feasibility = 0.0;   // max(||e||_inf, max_i h_i^+)

  double max() const {
    return std::max(stationarity, std::max(comp_slack, feasibility));
  }
};

KktResidual kkt_residual(const BilevelProblem& problem, const Vector& x,
                         const PrimalDualSolution& sol);

// ---------------------------------------------------------------------------
// Equality-constrained quadratic subproblem
//
//   min_y 1/2 y^T metric y + lin^T y   s.t.  Beq y = rhs
//
// solved through one factorization of the (d+k) x (d+k) saddle matrix
//   [ metric  Beq^T ]
//   [ Beq     0     ].
// The factorization uses full pivoting; any pivot below 1e-12 times the
// matrix max-abs raises RankDeficient. metric only needs to be positive
// definite on the nullspace of Beq.
// ---------------------------------------------------------------------------

class SaddleSolver {
 public:
  SaddleSolver(const Matrix& H, const Matrix& B);

  /// Solves [H B^T; B 0] [y; mult] = [top; bottom].
  void solve(const Vector& top, const Vector& bottom, Vector& y,
             Vector& mult) const;
  /// Column-wise multi-RHS solve; returns the stacked (d+k) x ncols block.
  Matrix solve_many(const Matrix& top, const Matrix& bottom) const;

  int dim_y() const { return d_; }
  int dim_mult() const { return k_; }

 private:
  int d_ = 0;
  int k_ = 0;
  Matrix kkt_;
  std::shared_ptr<Eigen::FullPivLU<Matrix>> lu_;
};

struct EqpResult {
  Vector y;
  Vector mult;  // multipliers of Beq y = rhs
};

EqpResult solve_eqp(const Matrix& metric, const Vector& lin, const Matrix& Beq,
                    const Vector& rhs);

// ---------------------------------------------------------------------------
// Lower-level solve. Dispatch:
//   * specialized solver attached to the problem, if any;
//   * primal-dual interior-point (Mehrotra predictor-corrector with an
//     active-set polish step) when a quadratic snapshot is available;
//   * penalized Newton on the augmented Lagrangian with multiplier updates
//     for raw callback problems.
// Certified solutions satisfy all three residuals <= cfg.tol; hitting the
// iteration cap returns the best iterate flagged non-certified. Throws
// Infeasible when the primal residual stalls with diverging multipliers and
// NotStronglyConvex when an indefinite objective Hessian is detected.
// ---------------------------------------------------------------------------

PrimalDualSolution solve_lower(const BilevelProblem& problem, const Vector& x,
                               const SolverConfig& cfg);

}  // namespace ffo
