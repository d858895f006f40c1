#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ffo/smoothed.hpp"

using namespace ffo;

namespace {

Vector vec1(double v) { return Vector::Constant(1, v); }

SmoothedReport run_wall(double a, double xv, double rho, int n,
                        std::uint64_t seed = 0) {
  SmoothedConfig cfg;
  cfg.rho = rho;
  cfg.n_samples = n;
  cfg.seed = seed;
  return smoothed_hypergradient(preset_wall(a), vec1(xv), vec1(1.0),
                                Vector::Zero(1), cfg);
}

// h = y - h0 - eta <= 0 together with the equality y = 0; any negative shift
// eta empties the feasible set.
BilevelProblem knife_edge_problem() {
  ParametricQp qp;
  qp.Q = Matrix::Identity(1, 1);
  qp.P = Matrix::Zero(1, 1);
  qp.q0 = Vector::Zero(1);
  qp.G_ineq = Matrix::Identity(1, 1);
  qp.h0 = Vector::Zero(1);
  qp.H_x = Matrix::Zero(1, 1);
  qp.A_eq = Matrix::Identity(1, 1);
  qp.b0 = Vector::Zero(1);
  qp.B_x = Matrix::Zero(1, 1);
  return make_parametric_qp(std::move(qp));
}

}  // namespace

TEST_CASE("same seed reproduces the report bit for bit") {
  const SmoothedReport a = run_wall(100.0, 1.0, 0.1, 64, 7);
  const SmoothedReport b = run_wall(100.0, 1.0, 0.1, 64, 7);
  CHECK((a.grad - b.grad).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.stderr_ - b.stderr_).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.n_degenerate == b.n_degenerate);
  CHECK(a.n_samples == 64);
  CHECK(a.stderr_.size() == 1);
  CHECK(a.wall_time_s >= 0.0);

  const SmoothedReport c = run_wall(100.0, 1.0, 0.1, 64, 8);
  CHECK((a.grad - c.grad).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("standard error shrinks like one over sqrt(n)") {
  const SmoothedReport small = run_wall(100.0, 1.0, 0.1, 500);
  const SmoothedReport large = run_wall(100.0, 1.0, 0.1, 2000);
  const double ratio = large.stderr_[0] / small.stderr_[0];
  CHECK(ratio >= 0.4);
  CHECK(ratio <= 0.6);
}

TEST_CASE("wall at the degenerate point averages half the slope") {
  // eta ~ U(-rho, rho): the shifted wall binds iff eta < a (1 - x), so the
  // sample mean estimates a * P(eta < 0) = a / 2 at x = 1.
  const SmoothedReport rep = run_wall(100.0, 1.0, 0.1, 2000);
  CHECK(rep.stderr_[0] > 0.3);  // Bernoulli spread, sigma ~ 50 / sqrt(2000)
  CHECK(rep.stderr_[0] < 3.0);
  CHECK(std::abs(rep.grad[0] - 50.0) <= 4.0 * rep.stderr_[0]);
}

TEST_CASE("wall mean follows the analytic activation probability") {
  const double a = 10.0, rho = 0.05;
  for (double xv : {0.8, 0.95, 1.0, 1.05, 1.2}) {
    const double margin = a * (1.0 - xv);
    const double p = margin >= rho    ? 1.0
                     : margin <= -rho ? 0.0
                                      : (margin + rho) / (2.0 * rho);
    const SmoothedReport rep = run_wall(a, xv, rho, 800);
    CAPTURE(xv);
    CHECK(std::abs(rep.grad[0] - a * p) <=
          4.0 * rep.stderr_[0] + 1e-5 * (1.0 + a));
  }
}

TEST_CASE("clean margins: every sample agrees with the slope") {
  const SmoothedReport rep = run_wall(100.0, 0.97, 0.1, 100);
  CHECK(std::abs(rep.grad[0] - 100.0) <= 1e-5);
  CHECK(rep.n_degenerate == 0);
  CHECK(rep.stderr_[0] <= 1e-5);

  const SmoothedReport tiny = run_wall(100.0, 0.9, 1e-3, 200);
  CHECK(std::abs(tiny.grad[0] - 100.0) <= 1e-5);
}

TEST_CASE("a never-active inequality makes smoothing a no-op") {
  ParametricQp qp;
  qp.Q = Matrix::Identity(2, 2);
  qp.P = Matrix::Zero(2, 1);
  qp.P << 1, 0;
  qp.q0 = Vector::Zero(2);
  qp.q0 << -1, -2;
  qp.G_ineq = Matrix::Zero(1, 2);
  qp.G_ineq << 1, 0;
  qp.h0 = Vector::Constant(1, 10.0);  // y1 <= 10, minimizer sits near 1
  qp.H_x = Matrix::Zero(1, 1);
  qp.A_eq = Matrix::Zero(0, 2);
  qp.b0 = Vector::Zero(0);
  qp.B_x = Matrix::Zero(0, 1);
  const BilevelProblem pb = make_parametric_qp(std::move(qp));

  const Vector x = vec1(0.3);
  const Vector c = Vector::Ones(2);
  const Vector direct = Vector::Zero(1);

  SmoothedConfig cfg;
  cfg.rho = 1e-3;
  cfg.n_samples = 7;
  const SmoothedReport rep = smoothed_hypergradient(pb, x, c, direct, cfg);

  FfoOptions opts;
  opts.eps = cfg.rho * 1e-3 / 1;  // the default per-sample accuracy
  const HypergradientReport plain = ffo_hypergradient(pb, x, c, direct, opts);
  CHECK(std::abs(rep.grad[0] - plain.grad[0]) <= 1e-6);
  CHECK(rep.stderr_[0] <= 1e-6);
  CHECK(rep.n_degenerate == 0);
}

TEST_CASE("samples inside the ambiguous band are flagged but kept") {
  // rho far below tol_act: at x = 1 every sample lands in the band.
  SmoothedConfig cfg;
  cfg.rho = 1e-8;
  cfg.n_samples = 40;
  const SmoothedReport rep = smoothed_hypergradient(
      preset_wall(100.0), vec1(1.0), vec1(1.0), Vector::Zero(1), cfg);
  CHECK(rep.n_degenerate == cfg.n_samples);
  CHECK(rep.grad.allFinite());
}

TEST_CASE("shifts that empty the feasible set raise Infeasible") {
  SmoothedConfig cfg;
  cfg.rho = 0.1;
  cfg.n_samples = 10;
  CHECK_THROWS_AS(smoothed_hypergradient(knife_edge_problem(), Vector::Zero(1),
                                         Vector::Ones(1), Vector::Zero(1), cfg),
                  Infeasible);
}
