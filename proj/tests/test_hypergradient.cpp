#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <nlohmann/json.hpp>

#include "ffo/hypergradient.hpp"
#include "ffo/rng.hpp"
#include "support/finite_diff.hpp"

using namespace ffo;
using ffo::testing::rel_err;

namespace {

Vector vec1(double v) { return Vector::Constant(1, v); }

PrimalDualSolution solve(const BilevelProblem& pb, const Vector& x,
                         double tol = 1e-11) {
  SolverConfig cfg;
  cfg.tol = tol;
  return solve_lower(pb, x, cfg);
}

GhostProblem make_ghost(const BilevelProblem& pb, const Vector& x,
                        const PrimalDualSolution& sol) {
  return build_ghost(pb, x, sol, identify_active(pb, x, sol));
}

double spectral_norm(const Matrix& M) {
  return Eigen::JacobiSVD<Matrix>(M).singularValues()[0];
}

Matrix random_spd(RandomStream& rs, int d, double lo, double hi) {
  Vector eigs(d);
  for (int i = 0; i < d; ++i) eigs[i] = rs.uniform(lo, hi);
  const Matrix V =
      Eigen::HouseholderQR<Matrix>(rs.gaussian_matrix(d, d)).householderQ();
  Matrix G = V * eigs.asDiagonal() * V.transpose();
  return 0.5 * (G + G.transpose());
}

}  // namespace

// ---------------------------------------------------------------------------
// metric nullspace projection
// ---------------------------------------------------------------------------

TEST_CASE("projection: no constraints leaves the point unchanged") {
  RandomStream rs = RandomStream::keyed(1, 0);
  const Vector z = rs.gaussian_vector(4);
  CHECK(project_metric_nullspace(Matrix::Identity(4, 4), Matrix::Zero(0, 4), z)
            .isApprox(z, 1e-14));
}

TEST_CASE("projection: Euclidean metric zeroes the constrained coordinate") {
  Matrix B(1, 2);
  B << 1, 0;
  Vector z(2);
  z << 3, 4;
  const Vector y = project_metric_nullspace(Matrix::Identity(2, 2), B, z);
  CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("projection: anisotropic metric vs dense line search") {
  // minimize (y1-1)^2 + 100 y2^2 on y1 + y2 = 0
  Matrix G = Matrix::Zero(2, 2);
  G(0, 0) = 1.0;
  G(1, 1) = 100.0;
  Matrix B(1, 2);
  B << 1, 1;
  Vector z(2);
  z << 1, 0;
  const Vector y = project_metric_nullspace(G, B, z);

  // independent oracle: brute-force scan of the 1-D constraint line y=(t,-t)
  double best_t = 0.0, best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 400000; ++i) {
    const double t = -2.0 + 4.0 * i / 400000.0;
    const double v = (t - 1.0) * (t - 1.0) + 100.0 * t * t;
    if (v < best_v) {
      best_v = v;
      best_t = t;
    }
  }
  CHECK(y[0] == doctest::Approx(best_t).epsilon(1e-4));
  CHECK(y[1] == doctest::Approx(-best_t).epsilon(1e-4));
  // frozen closed form of the same minimizer
  CHECK(y[0] == doctest::Approx(1.0 / 101.0).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(-1.0 / 101.0).epsilon(1e-12));
}

TEST_CASE("projection norm and perturbation bounds hold on random instances") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    RandomStream rs = RandomStream::keyed(seed, 0xb0b);
    const int d = 2 + int(rs.next_u64() % 6);
    const int k = int(rs.next_u64() % static_cast<std::uint64_t>(d));
    const double lo = rs.uniform(0.1, 1.0);
    const double hi = lo * rs.uniform(1.5, 50.0);
    const Matrix G = random_spd(rs, d, lo, hi);
    const Matrix Gt = random_spd(rs, d, lo, hi);
    const Matrix B = rs.gaussian_matrix(k, d);
    const Vector z = rs.gaussian_vector(d);

    Vector eigs_all(2 * d);
    eigs_all << Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues(),
        Eigen::SelfAdjointEigenSolver<Matrix>(Gt).eigenvalues();
    const double mu = eigs_all.minCoeff();
    const double cg = eigs_all.maxCoeff();
    const double kappa = cg / mu;

    const Vector pz = project_metric_nullspace(G, B, z);
    const Vector pz_t = project_metric_nullspace(Gt, B, z);
    CAPTURE(seed);
    CHECK(pz.norm() <= (1.0 + std::sqrt(kappa)) * z.norm() + 1e-9);
    CHECK((pz - pz_t).norm() <=
          std::sqrt(spectral_norm(G - Gt) / mu * kappa) * z.norm() + 1e-9);
    if (k > 0) CHECK((B * pz).cwiseAbs().maxCoeff() <= 1e-8 * z.norm());
  }
}

// ---------------------------------------------------------------------------
// sensitivity oracles
// ---------------------------------------------------------------------------

TEST_CASE("unconstrained sensitivity is the Newton block") {
  GhostProblem ghost;
  ghost.dim_y = 3;
  ghost.dim_x = 3;
  ghost.B_tilde = Matrix::Zero(0, 3);
  ghost.A_tilde = Matrix::Zero(0, 3);
  ghost.rank_certified = true;
  const Matrix J = projection_jacobian(ghost, Matrix::Identity(3, 3),
                                       Matrix::Identity(3, 3));
  CHECK(J.isApprox(-Matrix::Identity(3, 3), 1e-13));
}

TEST_CASE("wall sensitivities: every oracle returns the slope") {
  const BilevelProblem pb = preset_wall(100.0);
  const Vector x = vec1(0.9);
  const PrimalDualSolution sol = solve(pb, x, 1e-12);
  const ActiveSet act = identify_active(pb, x, sol);
  const GhostProblem ghost = build_ghost(pb, x, sol, act);

  const Matrix J_exact = exact_jacobian(pb, x, sol, act);
  CHECK(J_exact(0, 0) == doctest::Approx(100.0).epsilon(1e-10));

  const Matrix J_proj = projection_jacobian(ghost, ghost.hess_yy(x, sol.y),
                                            ghost.hess_yx(x, sol.y));
  CHECK(J_proj(0, 0) == doctest::Approx(100.0).epsilon(1e-10));

  SolverConfig cfg;
  cfg.tol = 1e-12;
  const Matrix J_fd = ffo::testing::solution_jacobian_fd(pb, x, cfg);
  CHECK(J_fd(0, 0) == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("circle sensitivities: curved constraint handled exactly") {
  const BilevelProblem pb = preset_circle();
  for (double xv : {0.2, 0.6}) {
    const Vector x = vec1(xv);
    const PrimalDualSolution sol = solve(pb, x, 1e-12);
    const ActiveSet act = identify_active(pb, x, sol);
    const double want = -xv / std::sqrt(1.0 - xv * xv);
    const Matrix J = exact_jacobian(pb, x, sol, act);
    CAPTURE(xv);
    CHECK(J(0, 0) == doctest::Approx(want).epsilon(1e-10));

    const GhostProblem ghost = build_ghost(pb, x, sol, act);
    const Matrix Jp = projection_jacobian(ghost, ghost.hess_yy(x, sol.y),
                                          ghost.hess_yx(x, sol.y));
    CHECK(Jp(0, 0) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("oracle triangle on random problems") {
  SolverConfig cfg;
  cfg.tol = 1e-11;
  int used = 0;
  for (std::uint64_t seed = 0; seed < 20 && used < 12; ++seed) {
    const BilevelProblem pb = preset_random_qp(seed, 6, 4, 1);
    const Vector x = Vector::Zero(pb.dim_x);
    const PrimalDualSolution sol = solve_lower(pb, x, cfg);
    if (complementarity_margin(pb, x, sol) < 1e-4) continue;
    ++used;
    const ActiveSet act = identify_active(pb, x, sol);
    const GhostProblem ghost = build_ghost(pb, x, sol, act);

    const Matrix J_exact = exact_jacobian(pb, x, sol, act);
    const Matrix J_proj = projection_jacobian(ghost, ghost.hess_yy(x, sol.y),
                                              ghost.hess_yx(x, sol.y));
    const Matrix J_fd = ffo::testing::solution_jacobian_fd(pb, x, cfg, 1e-5);
    CAPTURE(seed);
    CHECK(rel_err(J_proj, J_exact) < 1e-8);
    CHECK(rel_err(J_fd, J_exact) < 1e-5);
  }
  CHECK(used >= 10);
}

TEST_CASE("degenerate active set poisons the square system") {
  const BilevelProblem pb = preset_wall(100.0);
  const Vector x = vec1(1.0);
  const PrimalDualSolution sol = solve(pb, x, 1e-12);
  const ActiveSet act = identify_active(pb, x, sol);
  REQUIRE(act.degenerate);
  CHECK_THROWS_AS(exact_jacobian(pb, x, sol, act), SingularKkt);
}

TEST_CASE("rank certification gates the projection formula") {
  GhostProblem ghost;
  ghost.dim_y = 2;
  ghost.dim_x = 1;
  ghost.B_tilde = Matrix::Zero(2, 2);  // dependent rows
  ghost.B_tilde << 1, 0, 1, 0;
  ghost.A_tilde = Matrix::Zero(2, 1);
  ghost.rank_certified = false;
  CHECK_THROWS_AS(
      projection_jacobian(ghost, Matrix::Identity(2, 2), Matrix::Zero(2, 1)),
      RankDeficient);
}

// ---------------------------------------------------------------------------
// perturbed solve and dual recovery
// ---------------------------------------------------------------------------

TEST_CASE("perturbed solve on the wall: pinned primal, shifted dual") {
  const BilevelProblem pb = preset_wall(100.0);
  const Vector x = vec1(0.9);
  const PrimalDualSolution sol = solve(pb, x, 1e-12);
  const GhostProblem ghost = make_ghost(pb, x, sol);

  SolverConfig inner;
  inner.tol = 1e-11;
  const double delta = 1e-3;
  const PrimalDualSolution pert =
      solve_perturbed(ghost, x, vec1(1.0), delta, inner);
  CHECK(pert.y[0] == doctest::Approx(90.0).epsilon(1e-12));  // fully pinned
  CHECK(pert.nu[0] == doctest::Approx(-delta).epsilon(1e-8));
  CHECK(pert.iterations == 0);
  CHECK(pert.certified);

  // zero perturbation recovers the base point with zero multiplier
  const PrimalDualSolution base =
      solve_perturbed(ghost, x, Vector::Zero(1), delta, inner);
  CHECK(base.y[0] == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(std::abs(recover_dual(ghost, x, sol.y)[0]) <= 1e-10);
}

TEST_CASE("perturbed solve respects the strong-convexity displacement bound") {
  for (std::uint64_t seed : {2ull, 5ull, 11ull}) {
    const BilevelProblem pb = preset_random_qp(seed, 7, 4, 1);
    const Vector x = Vector::Zero(pb.dim_x);
    const PrimalDualSolution sol = solve(pb, x);
    const GhostProblem ghost = make_ghost(pb, x, sol);
    RandomStream rs = RandomStream::keyed(seed, 0xc0de);
    const Vector c = rs.gaussian_vector(pb.dim_y);

    SolverConfig inner;
    inner.tol = 1e-12;
    const double delta = 1e-3;
    const PrimalDualSolution pert = solve_perturbed(ghost, x, c, delta, inner);
    CAPTURE(seed);
    CHECK((pert.y - sol.y).norm() <= delta * c.norm() / pb.mu_g + 1e-9);
    CHECK(pert.feasibility_residual <= 1e-10);
    CHECK(pert.stationarity_residual <= 1e-10);
  }
}

TEST_CASE("perturbed solve handles a shifted parameter feasibly") {
  const BilevelProblem pb = preset_random_qp(4, 6, 3, 1);
  const Vector x0 = Vector::Zero(pb.dim_x);
  const PrimalDualSolution sol = solve(pb, x0);
  const GhostProblem ghost = make_ghost(pb, x0, sol);

  RandomStream rs = RandomStream::keyed(4, 1);
  const Vector x1 = x0 + 1e-3 * rs.gaussian_vector(pb.dim_x);
  SolverConfig inner;
  inner.tol = 1e-11;
  const PrimalDualSolution pert =
      solve_perturbed(ghost, x1, Vector::Zero(pb.dim_y), 1e-4, inner);
  CHECK(ghost.constraint_values(x1, pert.y).cwiseAbs().maxCoeff() <= 1e-11);
}

// ---------------------------------------------------------------------------
// end-to-end estimator
// ---------------------------------------------------------------------------

TEST_CASE("estimator matches the exact oracle on the fixtures") {
  const BilevelProblem wall = preset_wall(100.0);
  FfoOptions opts;
  opts.eps = 1e-4;
  opts.solver.tol = 1e-11;
  const HypergradientReport rep =
      ffo_hypergradient(wall, vec1(0.9), vec1(1.0), Vector::Zero(1), opts);
  CHECK(rep.grad[0] == doctest::Approx(100.0).epsilon(1e-8));
  CHECK(rep.certified);
  CHECK(rep.delta == doctest::Approx(1e-4));
  CHECK(rep.comp_margin == doctest::Approx(10.0));
  CHECK(rep.rank_certified);
  // structural split
  CHECK(rep.grad[0] == rep.v_x[0] + rep.direct_term[0]);

  const Vector exact =
      exact_hypergradient(wall, vec1(0.9), vec1(1.0), Vector::Zero(1));
  CHECK(exact[0] == doctest::Approx(100.0).epsilon(1e-11));

  const BilevelProblem circle = preset_circle();
  for (double xv : {0.2, 0.6}) {
    const double want = -xv / std::sqrt(1.0 - xv * xv);
    const HypergradientReport r =
        ffo_hypergradient(circle, vec1(xv), vec1(1.0), Vector::Zero(1), opts);
    CAPTURE(xv);
    CHECK(r.grad[0] == doctest::Approx(want).epsilon(1e-6));
    CHECK(r.certified);
  }
}

TEST_CASE("direct term passes through untouched") {
  const BilevelProblem pb = preset_wall(100.0);
  FfoOptions opts;
  opts.solver.tol = 1e-11;
  const Vector direct = vec1(-7.5);
  const HypergradientReport rep =
      ffo_hypergradient(pb, vec1(0.9), vec1(1.0), direct, opts);
  CHECK(rep.direct_term[0] == -7.5);
  CHECK(rep.grad[0] == doctest::Approx(100.0 - 7.5).epsilon(1e-8));
  // c = 0 leaves only the direct term
  const Vector just_direct =
      exact_hypergradient(pb, vec1(0.9), Vector::Zero(1), direct);
  CHECK(just_direct[0] == doctest::Approx(-7.5).epsilon(1e-12));
}

TEST_CASE("estimator tracks the exact oracle across the random suite") {
  FfoOptions opts;
  opts.eps = 1e-4;
  opts.solver.tol = 1e-11;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const BilevelProblem pb = preset_random_qp(seed, 6, 4, 1);
    const Vector x = Vector::Zero(pb.dim_x);
    RandomStream rs = RandomStream::keyed(seed, 0xabc);
    const Vector c = rs.gaussian_vector(pb.dim_y);
    const Vector direct = Vector::Zero(pb.dim_x);

    const PrimalDualSolution sol = solve(pb, x);
    if (complementarity_margin(pb, x, sol) < 1e-4) continue;
    const HypergradientReport rep = ffo_hypergradient(pb, x, c, direct, opts);
    const Vector exact = exact_hypergradient(pb, x, c, direct);
    CAPTURE(seed);
    CHECK((rep.grad - exact).norm() <= 20.0 * opts.eps * (1.0 + c.norm()));
    CHECK(rep.certified);
  }
}

TEST_CASE("estimation error scales linearly in the probe size") {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 20 && ratios.size() < 12; ++seed) {
    const BilevelProblem pb = preset_random_qp(seed, 7, 3, 1);
    const Vector x = Vector::Zero(pb.dim_x);
    const PrimalDualSolution sol = solve(pb, x);
    if (complementarity_margin(pb, x, sol) < 1e-4) continue;
    RandomStream rs = RandomStream::keyed(seed, 0xdd);
    const Vector c = rs.gaussian_vector(pb.dim_y);
    const Vector direct = Vector::Zero(pb.dim_x);
    const Vector exact = exact_hypergradient(pb, x, c, direct);

    auto err_at = [&](double delta) {
      FfoOptions o;
      o.eps = delta;
      // loose forward tolerance keeps the inner tolerance on the
      // delta^2 branch of min(tol, 1e-2 delta^2)
      o.solver.tol = 1e-5;
      return (ffo_hypergradient(pb, x, c, direct, o).grad - exact).norm();
    };
    const double e1 = err_at(1e-2);
    const double e2 = err_at(5e-3);
    if (e1 <= 0.0) continue;
    ratios.push_back(e2 / e1);
  }
  REQUIRE(ratios.size() >= 10);
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  CHECK(median >= 0.3);
  CHECK(median <= 0.7);
}

TEST_CASE("degeneracy downgrades certification instead of throwing") {
  const BilevelProblem pb = preset_wall(100.0);
  FfoOptions opts;
  opts.solver.tol = 1e-12;
  const HypergradientReport rep =
      ffo_hypergradient(pb, vec1(1.0), vec1(1.0), Vector::Zero(1), opts);
  CHECK_FALSE(rep.certified);
  CHECK(rep.active.degenerate);
  CHECK(rep.grad.allFinite());

  FfoOptions strict = opts;
  strict.strict = true;
  CHECK_THROWS_AS(
      ffo_hypergradient(pb, vec1(1.0), vec1(1.0), Vector::Zero(1), strict),
      DegenerateActiveSet);
}

TEST_CASE("estimator refuses an uncertified forward solution") {
  const BilevelProblem pb = preset_random_qp(3, 8, 6, 1);
  SolverConfig starve;
  starve.tol = 1e-30;  // unattainable, so the forward flag stays down
  const PrimalDualSolution bad = solve_lower(pb, Vector::Zero(pb.dim_x), starve);
  REQUIRE_FALSE(bad.certified);
  CHECK_THROWS_AS(
      ffo_from_solution(pb, Vector::Zero(pb.dim_x), Vector::Ones(pb.dim_y),
                        Vector::Zero(pb.dim_x), bad, FfoOptions{}),
      UncertifiedSolution);
}

TEST_CASE("report serializes with a stable schema") {
  const BilevelProblem pb = preset_wall(100.0);
  FfoOptions opts;
  opts.solver.tol = 1e-11;
  const HypergradientReport rep =
      ffo_hypergradient(pb, vec1(0.9), vec1(1.0), Vector::Zero(1), opts);
  const nlohmann::json j = rep;
  for (const char* key :
       {"grad", "v_x", "direct_term", "delta", "active", "timings",
        "certified", "comp_margin", "rank_certified"})
    CHECK(j.contains(key));
  CHECK(j["active"].contains("indices"));
  CHECK(j["active"].contains("degenerate"));
  CHECK(j["timings"].contains("forward_s"));
  CHECK(j["timings"].contains("perturbed_s"));
  CHECK(j["timings"].contains("assembly_s"));
  CHECK(j["grad"][0].get<double>() == doctest::Approx(100.0).epsilon(1e-8));
}

TEST_CASE("bad probe size is rejected") {
  const BilevelProblem pb = preset_wall(100.0);
  const Vector x = vec1(0.9);
  const PrimalDualSolution sol = solve(pb, x);
  const GhostProblem ghost = make_ghost(pb, x, sol);
  CHECK_THROWS_AS(
      finite_diff_vx(ghost, x, sol, Vector::Zero(1), sol, Vector::Zero(1), 0.0),
      std::invalid_argument);
}
