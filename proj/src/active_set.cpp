#include "ffo/active_set.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace ffo {

bool ActiveSet::contains(int i) const {
  return std::binary_search(indices.begin(), indices.end(), i);
}

Vector GhostProblem::constraint_values(const Vector& x, const Vector& y) const {
  return A_tilde * (x - base_x) + B_tilde * (y - base_y);
}

ActiveSet identify_active(const BilevelProblem& pb, const Vector& x,
                          const PrimalDualSolution& sol, double tol_act) {
  if (!(tol_act > 0.0))
    throw std::invalid_argument("identify_active: tol_act must be > 0");
  if (sol.y.size() != pb.dim_y || sol.lambda.size() != pb.n_ineq)
    throw DimensionMismatch("identify_active: solution shapes do not match");

  // a sloppy point cannot be classified: require the complementarity products
  // to sit well below the classification band
  const double hard_cap = 100.0 * tol_act * tol_act;
  if (sol.comp_slack_residual > hard_cap)
    throw UncertifiedSolution(
        "identify_active: complementarity residual exceeds 100 * tol_act^2");

  ActiveSet as;
  as.tol_act = tol_act;
  as.degenerate = false;
  as.margin = std::numeric_limits<double>::infinity();

  if (pb.n_ineq == 0) return as;
  const Vector hv = pb.h_values(x, sol.y);
  for (int i = 0; i < pb.n_ineq; ++i) {
    const double lam = sol.lambda[i];
    const double slack = -hv[i];  // >= 0 at feasible points
    const bool lam_big = lam > tol_act;
    const bool slack_big = slack > tol_act;
    if (lam_big && !slack_big) {
      as.indices.push_back(i);
    } else if (!lam_big && slack_big) {
      // inactive
    } else if (lam_big && slack_big) {
      // both large: the point violates complementarity too much to classify
      throw UncertifiedSolution(
          "identify_active: multiplier and slack both exceed tol_act");
    } else {
      // both inside the band: weakly-active tie, break toward the larger signal
      as.degenerate = true;
      as.margin = std::min(as.margin, std::max(lam, slack));
      if (lam >= slack) as.indices.push_back(i);
    }
  }
  std::sort(as.indices.begin(), as.indices.end());
  return as;
}

double complementarity_margin(const BilevelProblem& pb, const Vector& x,
                              const PrimalDualSolution& sol) {
  if (pb.n_ineq == 0) return std::numeric_limits<double>::infinity();
  const Vector hv = pb.h_values(x, sol.y);
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < pb.n_ineq; ++i)
    margin = std::min(margin, std::max(sol.lambda[i], -hv[i]));
  return margin;
}

GhostProblem build_ghost(const BilevelProblem& pb, const Vector& x,
                         const PrimalDualSolution& sol, const ActiveSet& active,
                         const GhostOptions& opts) {
  if (x.size() != pb.dim_x)
    throw DimensionMismatch("build_ghost: x size does not match dim_x");
  if (opts.strict && active.degenerate)
    throw DegenerateActiveSet("build_ghost: tie-broken active set in strict mode");

  GhostProblem g;
  g.dim_y = pb.dim_y;
  g.dim_x = pb.dim_x;
  g.base_x = x;
  g.base_y = sol.y;
  g.lambda_star = sol.lambda;
  g.nu_star = sol.nu;
  g.active = active;

  const int p = pb.n_eq;
  const int ka = static_cast<int>(active.indices.size());
  g.B_tilde = Matrix::Zero(p + ka, pb.dim_y);
  g.A_tilde = Matrix::Zero(p + ka, pb.dim_x);
  Matrix hjy, hjx;
  if (pb.n_ineq > 0) {
    hjy = pb.h_jac_y(x, sol.y);
    hjx = pb.h_jac_x(x, sol.y);
  }
  if (p > 0) {
    g.B_tilde.topRows(p) = pb.e_jac_y(x, sol.y);
    g.A_tilde.topRows(p) = pb.e_jac_x(x, sol.y);
  }
  for (int i = 0; i < ka; ++i) {
    g.B_tilde.row(p + i) = hjy.row(active.indices[i]);
    g.A_tilde.row(p + i) = hjx.row(active.indices[i]);
  }

  // full row rank of the frozen constraint gradients certifies that the
  // multipliers of the reduced problem are unique
  if (g.B_tilde.rows() == 0) {
    g.rank_certified = true;
  } else {
    const Eigen::JacobiSVD<Matrix> svd(g.B_tilde);
    const double smax = svd.singularValues()[0];
    const double smin = svd.singularValues()[svd.singularValues().size() - 1];
    g.rank_certified =
        g.B_tilde.rows() <= g.B_tilde.cols() && smin > opts.rank_rtol * smax;
    if (opts.strict && !g.rank_certified)
      throw LicqViolation("build_ghost: frozen constraint rows are rank deficient");
  }

  // objective of the reduced problem: the original objective plus the fixed
  // multiplier terms, so its y-gradient vanishes at (base_x, base_y)
  const Vector lam = sol.lambda;
  const Vector nu = sol.nu;
  const int m = pb.n_ineq;
  auto g_value_src = pb.g_value;
  auto g_grad_y_src = pb.g_grad_y;
  auto g_grad_x_src = pb.g_grad_x;
  auto h_values_src = pb.h_values;
  auto h_jac_y_src = pb.h_jac_y;
  auto h_jac_x_src = pb.h_jac_x;
  auto e_values_src = pb.e_values;
  auto e_jac_y_src = pb.e_jac_y;
  auto e_jac_x_src = pb.e_jac_x;

  g.g_value = [=](const Vector& xx, const Vector& yy) {
    double v = g_value_src(xx, yy);
    if (m > 0) v += lam.dot(h_values_src(xx, yy));
    if (p > 0) v += nu.dot(e_values_src(xx, yy));
    return v;
  };
  g.g_grad_y = [=](const Vector& xx, const Vector& yy) {
    Vector v = g_grad_y_src(xx, yy);
    if (m > 0) v.noalias() += h_jac_y_src(xx, yy).transpose() * lam;
    if (p > 0) v.noalias() += e_jac_y_src(xx, yy).transpose() * nu;
    return v;
  };
  g.g_grad_x = [=](const Vector& xx, const Vector& yy) {
    Vector v = g_grad_x_src(xx, yy);
    if (m > 0) v.noalias() += h_jac_x_src(xx, yy).transpose() * lam;
    if (p > 0) v.noalias() += e_jac_x_src(xx, yy).transpose() * nu;
    return v;
  };

  if (pb.lag_hess_yy || pb.g_hess_yy) {
    auto lag_yy = pb.lag_hess_yy;
    auto g_hess_yy = pb.g_hess_yy;
    g.hess_yy = [=](const Vector& xx, const Vector& yy) {
      if (lag_yy) return lag_yy(xx, yy, lam, nu);
      return g_hess_yy(xx, yy);
    };
  }
  if (pb.lag_hess_yx || pb.g_hess_yx) {
    auto lag_yx = pb.lag_hess_yx;
    auto g_hess_yx = pb.g_hess_yx;
    g.hess_yx = [=](const Vector& xx, const Vector& yy) {
      if (lag_yx) return lag_yx(xx, yy, lam, nu);
      return g_hess_yx(xx, yy);
    };
  }
  return g;
}

BilevelProblem ghost_as_bilevel(const GhostProblem& g) {
  BilevelProblem pb;
  pb.dim_y = g.dim_y;
  pb.dim_x = g.dim_x;
  pb.n_ineq = 0;
  pb.n_eq = g.n_rows();
  // strong-convexity modulus measured at the base point; the reduced
  // objective is only locally quadratic-like away from it
  pb.mu_g = 0.0;
  if (g.hess_yy) {
    const Matrix H0 = g.hess_yy(g.base_x, g.base_y);
    pb.mu_g = Eigen::SelfAdjointEigenSolver<Matrix>(H0).eigenvalues().minCoeff();
  }
  pb.g_value = g.g_value;
  pb.g_grad_y = g.g_grad_y;
  pb.g_grad_x = g.g_grad_x;
  pb.h_values = [](const Vector&, const Vector&) { return Vector(); };
  pb.h_jac_y = [d = g.dim_y](const Vector&, const Vector&) {
    return Matrix::Zero(0, d);
  };
  pb.h_jac_x = [dx = g.dim_x](const Vector&, const Vector&) {
    return Matrix::Zero(0, dx);
  };
  const Matrix B = g.B_tilde;
  const Matrix A = g.A_tilde;
  const Vector bx = g.base_x;
  const Vector by = g.base_y;
  pb.e_values = [=](const Vector& xx, const Vector& yy) {
    return Vector(A * (xx - bx) + B * (yy - by));
  };
  pb.e_jac_y = [=](const Vector&, const Vector&) { return B; };
  pb.e_jac_x = [=](const Vector&, const Vector&) { return A; };
  if (g.hess_yy) {
    auto hyy = g.hess_yy;
    pb.g_hess_yy = [=](const Vector& xx, const Vector& yy) { return hyy(xx, yy); };
  }
  if (g.hess_yx) {
    auto hyx = g.hess_yx;
    pb.g_hess_yx = [=](const Vector& xx, const Vector& yy) { return hyx(xx, yy); };
  }
  return pb;
}

}  // namespace ffo
