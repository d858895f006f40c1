#include "ffo/hypergradient.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "ffo/rng.hpp"

namespace ffo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

void to_json(nlohmann::json& j, const HypergradientReport& r) {
  j = nlohmann::json{
      {"grad", to_std(r.grad)},
      {"v_x", to_std(r.v_x)},
      {"direct_term", to_std(r.direct_term)},
      {"delta", r.delta},
      {"active",
       {{"indices", r.active.indices},
        {"margin", finite_or_null(r.active.margin)},
        {"degenerate", r.active.degenerate},
        {"tol_act", r.active.tol_act}}},
      {"timings",
       {{"forward_s", r.timings.forward_s},
        {"perturbed_s", r.timings.perturbed_s},
        {"assembly_s", r.timings.assembly_s}}},
      {"certified", r.certified},
      {"comp_margin", finite_or_null(r.comp_margin)},
      {"rank_certified", r.rank_certified}};
}

Vector project_metric_nullspace(const Matrix& metric, const Matrix& B,
                                const Vector& z) {
  if (B.rows() == 0) return z;
  const EqpResult r =
      solve_eqp(metric, Vector(-metric * z), B, Vector::Zero(B.rows()));
  return r.y;
}

Matrix projection_jacobian(const GhostProblem& ghost, const Matrix& hess_yy,
                           const Matrix& hess_yx) {
  if (!ghost.rank_certified)
    throw RankDeficient("projection_jacobian: ghost constraint rows not rank certified");
  const int d = ghost.dim_y;
  const int nx = ghost.dim_x;
  const int k = ghost.n_rows();
  if (hess_yy.rows() != d || hess_yy.cols() != d || hess_yx.rows() != d ||
      hess_yx.cols() != nx)
    throw DimensionMismatch("projection_jacobian: Hessian shapes do not match");

  Eigen::LLT<Matrix> llt(hess_yy);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("projection_jacobian: hess_yy failed Cholesky");

  const Matrix W1 = -llt.solve(hess_yx);  // unconstrained sensitivity
  if (k == 0) return W1;

  // constraint-consistent sensitivity: least-squares rows B~ dy = -A~ dx
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ghost.B_tilde);
  const Matrix W2 = cod.solve(-ghost.A_tilde);

  // metric-nullspace projection of both blocks through one factorization
  SaddleSolver ss(hess_yy, ghost.B_tilde);
  Matrix top(d, 2 * nx);
  top.leftCols(nx) = hess_yy * W1;
  top.rightCols(nx) = hess_yy * W2;
  const Matrix sol = ss.solve_many(top, Matrix::Zero(k, 2 * nx));
  const Matrix p1 = sol.topRows(d).leftCols(nx);
  const Matrix p2 = sol.topRows(d).rightCols(nx);
  return p1 + W2 - p2;
}

Matrix exact_jacobian(const BilevelProblem& pb, const Vector& x,
                      const PrimalDualSolution& sol, const ActiveSet& active) {
  if (active.degenerate)
    throw SingularKkt("exact_jacobian: degenerate active set");
  const int d = pb.dim_y;
  const int m = pb.n_ineq;
  const int p = pb.n_eq;
  const int n = d + m + p;

  const Matrix hl_yy = pb.lagrangian_hess_yy(x, sol.y, sol.lambda, sol.nu);
  const Matrix hl_yx = pb.lagrangian_hess_yx(x, sol.y, sol.lambda, sol.nu);

  Matrix J = Matrix::Zero(n, n);
  Matrix rhs = Matrix::Zero(n, pb.dim_x);
  J.topLeftCorner(d, d) = hl_yy;
  rhs.topRows(d) = -hl_yx;
  if (m > 0) {
    const Vector hv = pb.h_values(x, sol.y);
    const Matrix hjy = pb.h_jac_y(x, sol.y);
    const Matrix hjx = pb.h_jac_x(x, sol.y);
    J.block(0, d, d, m) = hjy.transpose();
    J.block(d, 0, m, d) = sol.lambda.asDiagonal() * hjy;
    J.block(d, d, m, m) = hv.asDiagonal();
    rhs.middleRows(d, m) = -(sol.lambda.asDiagonal() * hjx);
  }
  if (p > 0) {
    const Matrix ejy = pb.e_jac_y(x, sol.y);
    J.block(0, d + m, d, p) = ejy.transpose();
    J.block(d + m, 0, p, d) = ejy;
    rhs.bottomRows(p) = -pb.e_jac_x(x, sol.y);
  }

  Eigen::FullPivLU<Matrix> lu(J);
  lu.setThreshold(1e-12);
  if (lu.rank() < n)
    throw SingularKkt("exact_jacobian: KKT Jacobian is numerically singular");
  Matrix dz = lu.solve(rhs);
  dz += lu.solve(rhs - J * dz);
  return dz.topRows(d);
}

Vector exact_hypergradient(const BilevelProblem& pb, const Vector& x,
                           const Vector& c, const Vector& direct,
                           const SolverConfig& cfg) {
  if (c.size() != pb.dim_y || direct.size() != pb.dim_x)
    throw DimensionMismatch("exact_hypergradient: c/direct sizes do not match");
  const PrimalDualSolution sol = solve_lower(pb, x, cfg);
  if (!sol.certified)
    throw UncertifiedSolution("exact_hypergradient: forward solve not certified");
  const ActiveSet active = identify_active(pb, x, sol);
  const Matrix J = exact_jacobian(pb, x, sol, active);
  return direct + J.transpose() * c;
}

// ---------------------------------------------------------------------------
// Perturbed ghost solve
// ---------------------------------------------------------------------------

PrimalDualSolution solve_perturbed(const GhostProblem& ghost, const Vector& x,
                                   const Vector& c, double delta,
                                   const SolverConfig& cfg) {
  if (x.size() != ghost.dim_x)
    throw DimensionMismatch("solve_perturbed: x size does not match");
  if (c.size() != ghost.dim_y)
    throw DimensionMismatch("solve_perturbed: c size does not match");
  const int d = ghost.dim_y;
  const int k = ghost.n_rows();
  const Vector dc = delta * c;

  // particular feasible point (exactly base_y when x is the base point)
  Vector y_p = ghost.base_y;
  int rank = 0;
  Matrix Z;  // orthonormal nullspace basis of B~, d x (d - rank)
  if (k > 0) {
    const Vector r = -ghost.A_tilde * (x - ghost.base_x);
    Eigen::JacobiSVD<Matrix> svd(
        ghost.B_tilde, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv[i] > 1e-12 * smax) ++rank;
    if (r.squaredNorm() > 0.0) {
      // min-norm least-squares step onto the shifted constraint plane
      Vector t = svd.matrixU().transpose() * r;
      for (int i = 0; i < rank; ++i) t[i] /= sv[i];
      for (Eigen::Index i = rank; i < t.size(); ++i) t[i] = 0.0;
      y_p += svd.matrixV().leftCols(sv.size()) * t.head(sv.size());
    }
    Z = svd.matrixV().rightCols(d - rank);
  } else {
    Z = Matrix::Identity(d, d);
  }
  const int rdim = d - rank;

  auto reduced_grad = [&](const Vector& u) {
    const Vector y = y_p + Z * u;
    return Vector(Z.transpose() * (ghost.g_grad_y(x, y) + dc));
  };

  PrimalDualSolution sol;
  sol.lambda.resize(0);
  int iters = 0;
  Vector u = Vector::Zero(rdim);

  if (rdim > 0) {
    // curvature estimate by finite-difference power iteration on the reduced
    // gradient; keeps the solve strictly first-order
    RandomStream rs = RandomStream::keyed(0x705e11, static_cast<std::uint64_t>(rdim));
    Vector v = rs.gaussian_vector(rdim);
    if (v.norm() < 1e-12) v = Vector::Unit(rdim, 0);
    v.normalize();
    const Vector g0 = reduced_grad(u);
    const double fd_t = 1e-5 * (1.0 + y_p.cwiseAbs().maxCoeff());
    double lmax = 0.0;
    for (int it = 0; it < 8; ++it) {
      const Vector w = (reduced_grad(u + fd_t * v) - g0) / fd_t;
      lmax = w.norm();
      if (lmax < 1e-300) break;
      v = w / lmax;
    }
    const double step = lmax > 0.0 ? 1.0 / (1.05 * lmax) : 1.0;
    const double tol_eff =
        std::max(cfg.tol, 1e-13 * (1.0 + lmax) * (1.0 + y_p.norm()));

    Vector g = g0;
    while (g.norm() > tol_eff && iters < 20000) {
      u -= step * g;
      g = reduced_grad(u);
      ++iters;
    }
  }

  sol.y = y_p + Z * u;
  sol.nu = recover_dual(ghost, x, sol.y, dc);
  Vector station = ghost.g_grad_y(x, sol.y) + dc;
  if (k > 0) station.noalias() += ghost.B_tilde.transpose() * sol.nu;
  sol.stationarity_residual = station.norm();
  sol.feasibility_residual =
      k > 0 ? ghost.constraint_values(x, sol.y).cwiseAbs().maxCoeff() : 0.0;
  sol.comp_slack_residual = 0.0;
  sol.iterations = iters;
  sol.tol = cfg.tol;
  sol.certified = sol.max_residual() <=
                  std::max(cfg.tol, 1e-12 * (1.0 + sol.y.norm()));
  return sol;
}

Vector recover_dual(const GhostProblem& ghost, const Vector& x, const Vector& y,
                    const Vector& extra_lin) {
  const int k = ghost.n_rows();
  if (k == 0) return Vector();
  Vector grad = ghost.g_grad_y(x, y);
  if (extra_lin.size() > 0) {
    if (extra_lin.size() != grad.size())
      throw DimensionMismatch("recover_dual: extra_lin size mismatch");
    grad += extra_lin;
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(
      Matrix(ghost.B_tilde.transpose()));
  return cod.solve(-grad);
}

Vector finite_diff_vx(const GhostProblem& ghost, const Vector& x,
                      const PrimalDualSolution& base, const Vector& mult_base,
                      const PrimalDualSolution& perturbed,
                      const Vector& mult_delta, double delta) {
  if (!(delta > 0.0))
    throw std::invalid_argument("finite_diff_vx: delta must be > 0");
  Vector hi = ghost.g_grad_x(x, perturbed.y);
  Vector lo = ghost.g_grad_x(x, base.y);
  if (ghost.n_rows() > 0) {
    hi.noalias() += ghost.A_tilde.transpose() * mult_delta;
    lo.noalias() += ghost.A_tilde.transpose() * mult_base;
  }
  return (hi - lo) / delta;
}

// ---------------------------------------------------------------------------
// Estimator driver
// ---------------------------------------------------------------------------

HypergradientReport ffo_from_solution(const BilevelProblem& pb, const Vector& x,
                                      const Vector& c, const Vector& direct,
                                      const PrimalDualSolution& sol,
                                      const FfoOptions& opts) {
  if (c.size() != pb.dim_y || direct.size() != pb.dim_x)
    throw DimensionMismatch("ffo_hypergradient: c/direct sizes do not match");
  if (!sol.certified)
    throw UncertifiedSolution("ffo_hypergradient: forward solution not certified");

  HypergradientReport rep;
  rep.timings.forward_s = sol.wall_time_s;

  const auto t_asm = Clock::now();
  rep.active = identify_active(pb, x, sol, opts.tol_act);
  GhostOptions gopts;
  gopts.strict = opts.strict;
  const GhostProblem ghost = build_ghost(pb, x, sol, rep.active, gopts);
  rep.comp_margin = complementarity_margin(pb, x, sol);
  rep.rank_certified = ghost.rank_certified;
  const Vector mult0 = recover_dual(ghost, x, sol.y);
  rep.timings.assembly_s = seconds_since(t_asm);

  rep.delta = std::clamp(opts.eps, 1e-8, 1e-2);
  SolverConfig inner = opts.solver;
  inner.tol = std::min(opts.solver.tol, 1e-2 * rep.delta * rep.delta);
  inner.warm_start.reset();

  const auto t_pert = Clock::now();
  const PrimalDualSolution pert = solve_perturbed(ghost, x, c, rep.delta, inner);
  rep.timings.perturbed_s = seconds_since(t_pert);

  const auto t_fd = Clock::now();
  rep.v_x = finite_diff_vx(ghost, x, sol, mult0, pert, pert.nu, rep.delta);
  rep.direct_term = direct;
  rep.grad = rep.v_x + direct;
  rep.timings.assembly_s += seconds_since(t_fd);

  rep.certified = sol.certified && pert.certified && ghost.rank_certified &&
                  !rep.active.degenerate;
  return rep;
}

HypergradientReport ffo_hypergradient(const BilevelProblem& pb, const Vector& x,
                                      const Vector& c, const Vector& direct,
                                      const FfoOptions& opts) {
  const PrimalDualSolution sol = solve_lower(pb, x, opts.solver);
  return ffo_from_solution(pb, x, c, direct, sol, opts);
}

}  // namespace ffo
