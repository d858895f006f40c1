#include "ffo/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

namespace ffo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void validate_config(const SolverConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("SolverConfig.tol must be > 0");
  if (cfg.max_iter < 1)
    throw std::invalid_argument("SolverConfig.max_iter must be >= 1");
}

KktResidual snapshot_residual(const QpSnapshot& s, const Vector& y,
                              const Vector& lam, const Vector& nu) {
  KktResidual r;
  Vector grad = s.Q * y + s.q;
  if (s.G.rows() > 0) grad.noalias() += s.G.transpose() * lam;
  if (s.A.rows() > 0) grad.noalias() += s.A.transpose() * nu;
  r.stationarity = grad.norm();
  if (s.G.rows() > 0) {
    const Vector hv = s.G * y - s.h;
    r.comp_slack = (lam.array() * hv.array()).abs().maxCoeff();
    r.feasibility = std::max(0.0, hv.maxCoeff());
  }
  if (s.A.rows() > 0)
    r.feasibility =
        std::max(r.feasibility, (s.A * y - s.b).cwiseAbs().maxCoeff());
  return r;
}

}  // namespace

KktResidual kkt_residual(const BilevelProblem& pb, const Vector& x,
                         const PrimalDualSolution& sol) {
  if (sol.y.size() != pb.dim_y ||
      sol.lambda.size() != pb.n_ineq || sol.nu.size() != pb.n_eq)
    throw DimensionMismatch("kkt_residual: solution shapes do not match problem");
  KktResidual r;
  Vector grad = pb.g_grad_y(x, sol.y);
  if (pb.n_ineq > 0) {
    const Vector hv = pb.h_values(x, sol.y);
    grad.noalias() += pb.h_jac_y(x, sol.y).transpose() * sol.lambda;
    r.comp_slack = (sol.lambda.array() * hv.array()).abs().maxCoeff();
    r.feasibility = std::max(0.0, hv.maxCoeff());
  }
  if (pb.n_eq > 0) {
    grad.noalias() += pb.e_jac_y(x, sol.y).transpose() * sol.nu;
    r.feasibility =
        std::max(r.feasibility, pb.e_values(x, sol.y).cwiseAbs().maxCoeff());
  }
  r.stationarity = grad.norm();
  return r;
}

// ---------------------------------------------------------------------------
// Saddle solver
// ---------------------------------------------------------------------------

SaddleSolver::SaddleSolver(const Matrix& H, const Matrix& B) {
  d_ = static_cast<int>(H.rows());
  k_ = static_cast<int>(B.rows());
  if (H.cols() != d_) throw DimensionMismatch("SaddleSolver: H must be square");
  if (B.cols() != d_ && k_ > 0)
    throw DimensionMismatch("SaddleSolver: B column count must match H");
  const int n = d_ + k_;
  kkt_ = Matrix::Zero(n, n);
  kkt_.topLeftCorner(d_, d_) = H;
  if (k_ > 0) {
    kkt_.topRightCorner(d_, k_) = B.transpose();
    kkt_.bottomLeftCorner(k_, d_) = B;
  }
  if (n == 0) return;
  lu_ = std::make_shared<Eigen::FullPivLU<Matrix>>(kkt_);
  // Under full pivoting the first pivot is the matrix max-abs, so the rank
  // test below rejects any pivot < 1e-12 * max-abs.
  lu_->setThreshold(1e-12);
  if (lu_->rank() < n)
    throw RankDeficient("saddle matrix pivot below 1e-12 of matrix scale");
}

void SaddleSolver::solve(const Vector& top, const Vector& bottom, Vector& y,
                         Vector& mult) const {
  Vector rhs(d_ + k_);
  rhs.head(d_) = top;
  rhs.tail(k_) = bottom;
  Vector sol = lu_->solve(rhs);
  sol += lu_->solve(rhs - kkt_ * sol);  // one refinement step
  y = sol.head(d_);
  mult = sol.tail(k_);
}

Matrix SaddleSolver::solve_many(const Matrix& top, const Matrix& bottom) const {
  Matrix rhs(d_ + k_, top.cols());
  rhs.topRows(d_) = top;
  if (k_ > 0) rhs.bottomRows(k_) = bottom;
  Matrix sol = lu_->solve(rhs);
  sol += lu_->solve(rhs - kkt_ * sol);
  return sol;
}

EqpResult solve_eqp(const Matrix& metric, const Vector& lin, const Matrix& Beq,
                    const Vector& rhs) {
  const int d = static_cast<int>(metric.rows());
  const int k = static_cast<int>(Beq.rows());
  if (metric.cols() != d) throw DimensionMismatch("solve_eqp: metric not square");
  if (lin.size() != d) throw DimensionMismatch("solve_eqp: lin size mismatch");
  if (k > 0 && Beq.cols() != d)
    throw DimensionMismatch("solve_eqp: Beq column count mismatch");
  if (rhs.size() != k) throw DimensionMismatch("solve_eqp: rhs size mismatch");

  SaddleSolver ss(metric, Beq);
  EqpResult out;
  ss.solve(-lin, rhs, out.y, out.mult);

  const double scale =
      std::max({1.0, metric.cwiseAbs().maxCoeff(),
                lin.size() ? lin.cwiseAbs().maxCoeff() : 0.0,
                k ? Beq.cwiseAbs().maxCoeff() : 0.0,
                k ? rhs.cwiseAbs().maxCoeff() : 0.0});
  Vector station = metric * out.y + lin;
  if (k > 0) station.noalias() += Beq.transpose() * out.mult;
  double res = station.cwiseAbs().maxCoeff();
  if (k > 0)
    res = std::max(res, (Beq * out.y - rhs).cwiseAbs().maxCoeff());
  if (res > 1e-10 * scale)
    throw RankDeficient("solve_eqp: residual above 1e-10 of input scale");
  return out;
}

// ---------------------------------------------------------------------------
// Interior point for quadratic snapshots
// ---------------------------------------------------------------------------

namespace {

// Largest alpha in (0, 1] with v + alpha dv >= (1 - tau) v elementwise.
double max_step(const Vector& v, const Vector& dv, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -tau * v[i] / dv[i]);
  return alpha;
}

struct KktFactor {
  // factorization of [[M, A^T], [A, 0]] (or plain M when p = 0)
  Eigen::LLT<Matrix> llt;
  Eigen::PartialPivLU<Matrix> lu;
  bool use_llt = false;
  int d = 0, p = 0;

  KktFactor(const Matrix& M, const Matrix& A) {
    d = static_cast<int>(M.rows());
    p = static_cast<int>(A.rows());
    if (p == 0) {
      llt.compute(M);
      use_llt = llt.info() == Eigen::Success;
      if (use_llt) return;
    }
    Matrix K = Matrix::Zero(d + p, d + p);
    K.topLeftCorner(d, d) = M;
    if (p > 0) {
      K.topRightCorner(d, p) = A.transpose();
      K.bottomLeftCorner(p, d) = A;
    }
    lu.compute(K);
  }

  void solve(const Vector& rd, const Vector& re, Vector& dy, Vector& dnu) const {
    if (use_llt) {
      dy = llt.solve(rd);
      dnu.resize(0);
      return;
    }
    Vector rhs(d + p);
    rhs.head(d) = rd;
    rhs.tail(p) = re;
    const Vector sol = lu.solve(rhs);
    dy = sol.head(d);
    dnu = sol.tail(p);
  }
};

// Active-set refinement: re-solves the equality system of the guessed active
// set, repairing the guess along the way — rows whose multiplier comes back
// negative are dropped, violated inactive rows are added. The interior-point
// iterate may leave a handful of (lambda, slack) pairs unresolved, so a fixed
// single guess is not enough. An accepted polish has exactly complementary
// pairs.
bool try_polish(const QpSnapshot& s, std::vector<int> act,
                PrimalDualSolution& sol) {
  const int d = static_cast<int>(s.Q.rows());
  const int p = static_cast<int>(s.A.rows());
  const int m = static_cast<int>(s.G.rows());
  std::vector<char> in(m, 0);
  for (int i : act) in[i] = 1;
  for (int round = 0; round < 30; ++round) {
    const int ka = static_cast<int>(act.size());
    if (p + ka > d) return false;
    Matrix B(p + ka, d);
    Vector rhs(p + ka);
    if (p > 0) {
      B.topRows(p) = s.A;
      rhs.head(p) = s.b;
    }
    for (int i = 0; i < ka; ++i) {
      B.row(p + i) = s.G.row(act[i]);
      rhs[p + i] = s.h[act[i]];
    }
    EqpResult eq;
    try {
      eq = solve_eqp(s.Q, s.q, B, rhs);
    } catch (const RankDeficient&) {
      return false;
    }
    int drop = -1;
    double most_negative = -1e-9;
    for (int i = 0; i < ka; ++i)
      if (eq.mult[p + i] < most_negative) {
        most_negative = eq.mult[p + i];
        drop = i;
      }
    if (drop >= 0) {
      in[act[drop]] = 0;
      act.erase(act.begin() + drop);
      continue;
    }
    int add = -1;
    double most_violated = 1e-9;
    if (m > 0) {
      const Vector hv = s.G * eq.y - s.h;
      for (int i = 0; i < m; ++i)
        if (!in[i] && hv[i] > most_violated) {
          most_violated = hv[i];
          add = i;
        }
    }
    if (add >= 0) {
      in[add] = 1;
      act.push_back(add);
      continue;
    }
    // consistent guess: accept only if it sharpens the iterate
    Vector lam = Vector::Zero(m);
    for (int i = 0; i < ka; ++i) lam[act[i]] = eq.mult[p + i];
    PrimalDualSolution cand;
    cand.y = eq.y;
    cand.lambda = lam.cwiseMax(0.0);
    cand.nu = eq.mult.head(p);
    const KktResidual r = snapshot_residual(s, cand.y, cand.lambda, cand.nu);
    if (r.max() >= std::max(sol.max_residual(), 1e-15)) return false;
    cand.stationarity_residual = r.stationarity;
    cand.comp_slack_residual = r.comp_slack;
    cand.feasibility_residual = r.feasibility;
    cand.iterations = sol.iterations;
    sol = cand;
    return true;
  }
  return false;
}

PrimalDualSolution solve_qp_ipm(const QpSnapshot& s, const SolverConfig& cfg) {
  const int d = static_cast<int>(s.Q.rows());
  const int m = static_cast<int>(s.G.rows());
  const int p = static_cast<int>(s.A.rows());

  Eigen::LLT<Matrix> qllt(s.Q);
  if (qllt.info() != Eigen::Success)
    throw NotStronglyConvex("objective Hessian failed Cholesky");

  PrimalDualSolution sol;
  sol.tol = cfg.tol;

  if (m == 0) {
    if (p == 0) {
      sol.y = qllt.solve(-s.q);
      sol.nu.resize(0);
    } else {
      const EqpResult eq = solve_eqp(s.Q, s.q, s.A, s.b);
      sol.y = eq.y;
      sol.nu = eq.mult;
    }
    sol.lambda.resize(0);
    const KktResidual r = snapshot_residual(s, sol.y, sol.lambda, sol.nu);
    sol.stationarity_residual = r.stationarity;
    sol.comp_slack_residual = r.comp_slack;
    sol.feasibility_residual = r.feasibility;
    sol.iterations = 1;
    sol.certified = r.max() <= cfg.tol;
    return sol;
  }

  // -- initialization ---------------------------------------------------------
  Vector y, sl, lam, nu;
  if (cfg.warm_start) {
    const PrimalDualSolution& w = *cfg.warm_start;
    if (w.y.size() != d || w.lambda.size() != m || w.nu.size() != p)
      throw DimensionMismatch("solve_lower: warm start shapes do not match");
    // push the warm point slightly into the interior so complementarity
    // products start near push^2 rather than 0
    const double push = std::max(1e-6, std::sqrt(cfg.tol));
    y = w.y;
    sl = (s.h - s.G * y).cwiseMax(push);
    lam = w.lambda.cwiseMax(push);
    nu = w.nu;
  } else {
    y = qllt.solve(-s.q);
    sl = (s.h - s.G * y).cwiseMax(1.0);
    lam = Vector::Ones(m);
    nu = Vector::Zero(p);
  }

  PrimalDualSolution best;
  best.y = y;
  best.lambda = lam;
  best.nu = nu;
  auto record = [&](const KktResidual& r, int iters) {
    if (r.max() < best.max_residual()) {
      best.y = y;
      best.lambda = lam;
      best.nu = nu;
      best.stationarity_residual = r.stationarity;
      best.comp_slack_residual = r.comp_slack;
      best.feasibility_residual = r.feasibility;
      best.iterations = iters;
    }
  };

  std::vector<double> feas_history;
  int iters = 0;
  bool converged = false;
  for (iters = 1; iters <= cfg.max_iter; ++iters) {
    Vector rd = s.Q * y + s.q + s.G.transpose() * lam;
    if (p > 0) rd.noalias() += s.A.transpose() * nu;
    const Vector rp_in = s.G * y + sl - s.h;
    const Vector rp_eq = p > 0 ? Vector(s.A * y - s.b) : Vector();

    if (!y.allFinite() || !sl.allFinite() || !lam.allFinite() ||
        (p > 0 && !nu.allFinite()))
      break;  // overflowed; the best recorded iterate stands

    const KktResidual res = snapshot_residual(s, y, lam, nu);
    record(res, iters - 1);
    feas_history.push_back(res.feasibility);
    if (res.max() <= cfg.tol) {
      converged = true;
      --iters;  // this pass only evaluated residuals
      break;
    }

    // non-improving primal residual with diverging multipliers: a dual ray,
    // i.e. no feasible point
    if (feas_history.size() >= 5 &&
        res.feasibility > std::max(100.0 * cfg.tol, 1e-9) &&
        res.feasibility >
            0.9 * *std::min_element(feas_history.begin(), feas_history.end()) &&
        std::max(lam.lpNorm<Eigen::Infinity>(),
                 p > 0 ? nu.lpNorm<Eigen::Infinity>() : 0.0) > 1e10)
      throw Infeasible("interior point: primal residual stalled with diverging multipliers");

    const double mu = lam.dot(sl) / m;
    const Vector dvec = (lam.array() / sl.array()).matrix();
    Matrix M = s.Q;
    M.noalias() += s.G.transpose() * dvec.asDiagonal() * s.G;
    const KktFactor factor(M, s.A);

    auto directions = [&](const Vector& rc, Vector& dy, Vector& dsl,
                          Vector& dlam, Vector& dnu) {
      const Vector w = ((-rc.array() + lam.array() * rp_in.array()) /
                        sl.array())
                           .matrix();
      const Vector rhs_y = -rd - s.G.transpose() * w;
      factor.solve(rhs_y, p > 0 ? Vector(-rp_eq) : Vector(), dy, dnu);
      dsl = -rp_in - s.G * dy;
      dlam = ((-rc.array() - lam.array() * dsl.array()) / sl.array()).matrix();
    };

    // predictor
    Vector dy_a, dsl_a, dlam_a, dnu_a;
    directions((lam.array() * sl.array()).matrix(), dy_a, dsl_a, dlam_a, dnu_a);
    const double ap_a = max_step(sl, dsl_a, 1.0);
    const double ad_a = max_step(lam, dlam_a, 1.0);
    const double mu_aff =
        (lam + ad_a * dlam_a).dot(sl + ap_a * dsl_a) / m;
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // corrector
    const Vector rc = (lam.array() * sl.array() +
                       dlam_a.array() * dsl_a.array() - sigma * mu)
                          .matrix();
    Vector dy, dsl, dlam, dnu;
    directions(rc, dy, dsl, dlam, dnu);

    const double tau = std::max(0.99, 1.0 - mu);
    const double ap = std::min(1.0, max_step(sl, dsl, tau));
    const double ad = std::min(1.0, max_step(lam, dlam, tau));
    y += ap * dy;
    sl += ap * dsl;
    lam += ad * dlam;
    if (p > 0) nu += ad * dnu;
  }

  sol = best;
  sol.tol = cfg.tol;
  sol.iterations = std::min(iters, cfg.max_iter);

  // active-set polish sharpens the IPM iterate to machine precision
  {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      const double slack = s.h[i] - s.G.row(i).dot(sol.y);
      if (sol.lambda[i] > slack) act.push_back(i);
    }
    try_polish(s, act, sol);
  }

  sol.certified = sol.max_residual() <= cfg.tol;
  if (!sol.certified && !converged) {
    if (sol.feasibility_residual > 1e-6 &&
        std::max(sol.lambda.size() ? sol.lambda.lpNorm<Eigen::Infinity>() : 0.0,
                 sol.nu.size() ? sol.nu.lpNorm<Eigen::Infinity>() : 0.0) > 1e7)
      throw Infeasible("interior point: iteration cap with stalled feasibility");
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Augmented-Lagrangian Newton for raw callback problems
// ---------------------------------------------------------------------------

// Newton polish of the active KKT system; returns true when it improved the
// residual. Requires Lagrangian Hessian callbacks.
bool kkt_polish(const BilevelProblem& pb, const Vector& x,
                PrimalDualSolution& sol) {
  if (!pb.lag_hess_yy && !pb.g_hess_yy) return false;
  const int d = pb.dim_y;
  const int m = pb.n_ineq;
  const int p = pb.n_eq;
  std::vector<int> act;
  if (m > 0) {
    const Vector hv = pb.h_values(x, sol.y);
    for (int i = 0; i < m; ++i)
      if (sol.lambda[i] > -hv[i]) act.push_back(i);
  }
  const int ka = static_cast<int>(act.size());
  if (p + ka > d) return false;

  Vector y = sol.y;
  Vector lam_a(ka);
  for (int i = 0; i < ka; ++i) lam_a[i] = sol.lambda[act[i]];
  Vector nu = sol.nu;

  auto assemble = [&](Vector& lam_full) {
    lam_full = Vector::Zero(m);
    for (int i = 0; i < ka; ++i) lam_full[act[i]] = std::max(0.0, lam_a[i]);
  };

  PrimalDualSolution cand = sol;
  for (int pass = 0; pass < 4; ++pass) {
    Vector lam_full;
    assemble(lam_full);
    Vector grad = pb.g_grad_y(x, y);
    Matrix hjy, ejy;
    Vector hv, ev;
    if (m > 0) {
      hv = pb.h_values(x, y);
      hjy = pb.h_jac_y(x, y);
      grad.noalias() += hjy.transpose() * lam_full;
    }
    if (p > 0) {
      ev = pb.e_values(x, y);
      ejy = pb.e_jac_y(x, y);
      grad.noalias() += ejy.transpose() * nu;
    }
    const int n = d + ka + p;
    Matrix J = Matrix::Zero(n, n);
    Vector r(n);
    J.topLeftCorner(d, d) = pb.lagrangian_hess_yy(x, y, lam_full, nu);
    r.head(d) = grad;
    for (int i = 0; i < ka; ++i) {
      J.block(0, d + i, d, 1) = hjy.row(act[i]).transpose();
      J.block(d + i, 0, 1, d) = hjy.row(act[i]);
      r[d + i] = hv[act[i]];
    }
    if (p > 0) {
      J.block(0, d + ka, d, p) = ejy.transpose();
      J.block(d + ka, 0, p, d) = ejy;
      r.tail(p) = ev;
    }
    Eigen::PartialPivLU<Matrix> lu(J);
    const Vector step = lu.solve(-r);
    if (!step.allFinite()) return false;
    y += step.head(d);
    for (int i = 0; i < ka; ++i) lam_a[i] += step[d + i];
    if (p > 0) nu += step.tail(p);
  }
  if (ka > 0 && lam_a.minCoeff() < -1e-9) return false;

  Vector lam_full;
  assemble(lam_full);
  cand.y = y;
  cand.lambda = lam_full;
  cand.nu = nu;
  const KktResidual r = kkt_residual(pb, x, cand);
  if (r.max() >= sol.max_residual()) return false;
  cand.stationarity_residual = r.stationarity;
  cand.comp_slack_residual = r.comp_slack;
  cand.feasibility_residual = r.feasibility;
  sol = cand;
  return true;
}

PrimalDualSolution solve_callback_al(const BilevelProblem& pb, const Vector& x,
                                     const SolverConfig& cfg) {
  if (!(pb.mu_g > 0.0))
    throw NotStronglyConvex("callback solver requires mu_g > 0");
  if (!pb.g_hess_yy)
    throw Error("callback solver requires g_hess_yy");
  const int d = pb.dim_y;
  const int m = pb.n_ineq;
  const int p = pb.n_eq;

  Vector y = cfg.warm_start ? cfg.warm_start->y : Vector::Zero(d);
  Vector lam = cfg.warm_start && m > 0 ? cfg.warm_start->lambda
                                       : Vector::Zero(m);
  Vector nu = cfg.warm_start && p > 0 ? cfg.warm_start->nu : Vector::Zero(p);

  {
    const Matrix H0 = pb.g_hess_yy(x, y);
    const double lam_min =
        Eigen::SelfAdjointEigenSolver<Matrix>(H0).eigenvalues().minCoeff();
    if (lam_min < -1e-8 * (1.0 + H0.cwiseAbs().maxCoeff()))
      throw NotStronglyConvex("indefinite objective Hessian detected");
  }

  auto al_value = [&](const Vector& yy, double rho) {
    double v = pb.g_value(x, yy);
    if (p > 0) {
      const Vector ev = pb.e_values(x, yy);
      v += nu.dot(ev) + 0.5 * rho * ev.squaredNorm();
    }
    if (m > 0) {
      const Vector hv = pb.h_values(x, yy);
      for (int i = 0; i < m; ++i) {
        const double t = std::max(0.0, lam[i] + rho * hv[i]);
        v += (t * t - lam[i] * lam[i]) / (2.0 * rho);
      }
    }
    return v;
  };

  double rho = 10.0;
  int newton_total = 0;
  PrimalDualSolution best;
  best.y = y;
  best.lambda = lam;
  best.nu = nu;

  double prev_feas = std::numeric_limits<double>::infinity();
  int stalls_at_cap = 0;
  const int newton_budget = std::max(cfg.max_iter * 10, 400);

  for (int outer = 0; outer < 60 && newton_total < newton_budget; ++outer) {
    const double inner_tol =
        std::max(0.3 * cfg.tol, 1e-2 * std::pow(0.2, outer));

    for (int it = 0; it < 80 && newton_total < newton_budget; ++it) {
      ++newton_total;
      Vector grad = pb.g_grad_y(x, y);
      Matrix H = pb.g_hess_yy(x, y);
      if (p > 0) {
        const Vector ev = pb.e_values(x, y);
        const Matrix ej = pb.e_jac_y(x, y);
        grad.noalias() += ej.transpose() * (nu + rho * ev);
        H.noalias() += rho * ej.transpose() * ej;
      }
      if (m > 0) {
        const Vector hv = pb.h_values(x, y);
        const Matrix hj = pb.h_jac_y(x, y);
        for (int i = 0; i < m; ++i) {
          const double t = lam[i] + rho * hv[i];
          if (t > 0.0) {
            grad.noalias() += t * hj.row(i).transpose();
            H.noalias() += rho * hj.row(i).transpose() * hj.row(i);
          }
        }
      }
      if (grad.norm() <= inner_tol) break;

      Eigen::LDLT<Matrix> ldlt(H);
      Vector step = ldlt.solve(-grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite() ||
          grad.dot(step) > 0.0) {
        ldlt.compute(H + (1e-6 + 1e-8 * H.cwiseAbs().maxCoeff()) *
                             Matrix::Identity(d, d));
        step = ldlt.solve(-grad);
      }
      // Armijo backtracking on the merit value
      const double base = al_value(y, rho);
      const double slope = grad.dot(step);
      double t = 1.0;
      for (int bt = 0; bt < 40; ++bt) {
        if (al_value(y + t * step, rho) <= base + 1e-4 * t * slope) break;
        t *= 0.5;
      }
      y += t * step;
    }

    // multiplier updates
    double feas = 0.0;
    if (m > 0) {
      const Vector hv = pb.h_values(x, y);
      lam = (lam + rho * hv).cwiseMax(0.0);
      feas = std::max(feas, std::max(0.0, hv.maxCoeff()));
    }
    if (p > 0) {
      const Vector ev = pb.e_values(x, y);
      nu += rho * ev;
      feas = std::max(feas, ev.cwiseAbs().maxCoeff());
    }

    PrimalDualSolution cur;
    cur.y = y;
    cur.lambda = lam;
    cur.nu = nu;
    const KktResidual r = kkt_residual(pb, x, cur);
    cur.stationarity_residual = r.stationarity;
    cur.comp_slack_residual = r.comp_slack;
    cur.feasibility_residual = r.feasibility;
    cur.iterations = newton_total;
    if (r.max() < best.max_residual()) best = cur;
    if (r.max() <= cfg.tol) break;

    if (feas > 0.5 * prev_feas) {
      if (rho >= 1e12) {
        if (++stalls_at_cap >= 3 && feas > std::max(100.0 * cfg.tol, 1e-8))
          throw Infeasible("augmented Lagrangian: feasibility stalled at penalty cap");
      } else {
        rho *= 10.0;
      }
    }
    prev_feas = feas;
  }

  best.iterations = newton_total;
  kkt_polish(pb, x, best);
  best.tol = cfg.tol;
  best.certified = best.max_residual() <= cfg.tol;
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------

PrimalDualSolution solve_lower(const BilevelProblem& pb, const Vector& x,
                               const SolverConfig& cfg) {
  validate_config(cfg);
  if (x.size() != pb.dim_x)
    throw DimensionMismatch("solve_lower: x size does not match dim_x");
  const auto t0 = Clock::now();

  PrimalDualSolution sol;
  if (pb.specialized_solver) {
    sol = pb.specialized_solver(pb, x, cfg);
  } else if (pb.qp_form) {
    sol = solve_qp_ipm(pb.qp_form(x), cfg);
  } else {
    sol = solve_callback_al(pb, x, cfg);
  }

  if (sol.lambda.size() > 0) sol.lambda = sol.lambda.cwiseMax(0.0);
  // residuals recomputed through the problem callbacks so the certificate
  // is independent of the method that produced the point
  const KktResidual r = kkt_residual(pb, x, sol);
  sol.stationarity_residual = r.stationarity;
  sol.comp_slack_residual = r.comp_slack;
  sol.feasibility_residual = r.feasibility;
  sol.tol = cfg.tol;
  sol.certified = r.max() <= cfg.tol;
  sol.wall_time_s = seconds_since(t0);
  return sol;
}

}  // namespace ffo
