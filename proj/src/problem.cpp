#include "ffo/problem.hpp"

#include <cmath>
#include <utility>

#include "ffo/rng.hpp"

namespace ffo {

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  return a;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Matrix matrix_from_json(const nlohmann::json& a, int rows, int cols,
                        const char* field) {
  if (static_cast<int>(a.size()) != rows * cols)
    throw DimensionMismatch(std::string(field) + ": expected " +
                            std::to_string(rows * cols) + " entries, got " +
                            std::to_string(a.size()));
  Matrix m(rows, cols);
  int k = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = a[k++].get<double>();
  return m;
}

Vector vector_from_json(const nlohmann::json& a, int n, const char* field) {
  if (static_cast<int>(a.size()) != n)
    throw DimensionMismatch(std::string(field) + ": expected " +
                            std::to_string(n) + " entries, got " +
                            std::to_string(a.size()));
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = a[i].get<double>();
  return v;
}

void require(bool ok, const char* what) {
  if (!ok) throw DimensionMismatch(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParametricQp serialization (row-major arrays)
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const ParametricQp& qp) {
  j = nlohmann::json{{"d", qp.d()},        {"dim_x", qp.dim_x()},
                     {"m", qp.m()},        {"p", qp.p()},
                     {"Q", matrix_to_json(qp.Q)},
                     {"P", matrix_to_json(qp.P)},
                     {"q0", vector_to_json(qp.q0)},
                     {"G_ineq", matrix_to_json(qp.G_ineq)},
                     {"h0", vector_to_json(qp.h0)},
                     {"H_x", matrix_to_json(qp.H_x)},
                     {"A_eq", matrix_to_json(qp.A_eq)},
                     {"b0", vector_to_json(qp.b0)},
                     {"B_x", matrix_to_json(qp.B_x)}};
}

void from_json(const nlohmann::json& j, ParametricQp& qp) {
  const int d = j.at("d").get<int>();
  const int dim_x = j.at("dim_x").get<int>();
  const int m = j.at("m").get<int>();
  const int p = j.at("p").get<int>();
  qp.Q = matrix_from_json(j.at("Q"), d, d, "Q");
  qp.P = matrix_from_json(j.at("P"), d, dim_x, "P");
  qp.q0 = vector_from_json(j.at("q0"), d, "q0");
  qp.G_ineq = matrix_from_json(j.at("G_ineq"), m, d, "G_ineq");
  qp.h0 = vector_from_json(j.at("h0"), m, "h0");
  qp.H_x = matrix_from_json(j.at("H_x"), m, dim_x, "H_x");
  qp.A_eq = matrix_from_json(j.at("A_eq"), p, d, "A_eq");
  qp.b0 = vector_from_json(j.at("b0"), p, "b0");
  qp.B_x = matrix_from_json(j.at("B_x"), p, dim_x, "B_x");
}

// ---------------------------------------------------------------------------
// ConstraintParamLp
// ---------------------------------------------------------------------------

Matrix ConstraintParamLp::A_of(const Vector& x) const {
  const Vector v = A0_vec + W_A * x;
  Matrix A(rows, dim);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < dim; ++j) A(i, j) = v[i * dim + j];
  return A;
}

Vector ConstraintParamLp::b_of(const Vector& x) const { return b0 + W_b * x; }

ConstraintParamLp ConstraintParamLp::direct_reshape(int rows, int dim,
                                                    double epsilon_reg,
                                                    Vector linear_cost,
                                                    bool nonnegativity) {
  ConstraintParamLp lp;
  lp.epsilon_reg = epsilon_reg;
  lp.linear_cost = std::move(linear_cost);
  lp.rows = rows;
  lp.dim = dim;
  const int dim_x = rows * dim + rows;
  lp.A0_vec = Vector::Zero(rows * dim);
  lp.W_A = Matrix::Zero(rows * dim, dim_x);
  lp.W_A.leftCols(rows * dim) = Matrix::Identity(rows * dim, rows * dim);
  lp.b0 = Vector::Zero(rows);
  lp.W_b = Matrix::Zero(rows, dim_x);
  lp.W_b.rightCols(rows) = Matrix::Identity(rows, rows);
  lp.nonnegativity = nonnegativity;
  return lp;
}

// ---------------------------------------------------------------------------
// BilevelProblem
// ---------------------------------------------------------------------------

Matrix BilevelProblem::lagrangian_hess_yy(const Vector& x, const Vector& y,
                                          const Vector& lambda,
                                          const Vector& nu) const {
  if (lag_hess_yy) return lag_hess_yy(x, y, lambda, nu);
  if (!g_hess_yy)
    throw Error("lagrangian_hess_yy: no second-order callbacks available");
  return g_hess_yy(x, y);
}

Matrix BilevelProblem::lagrangian_hess_yx(const Vector& x, const Vector& y,
                                          const Vector& lambda,
                                          const Vector& nu) const {
  if (lag_hess_yx) return lag_hess_yx(x, y, lambda, nu);
  if (!g_hess_yx)
    throw Error("lagrangian_hess_yx: no second-order callbacks available");
  return g_hess_yx(x, y);
}

BilevelProblem make_parametric_qp(ParametricQp qp_data) {
  const int d = qp_data.d();
  const int dim_x = qp_data.dim_x();
  const int m = qp_data.m();
  const int p = qp_data.p();
  require(d >= 1, "Q must be at least 1x1");
  require(qp_data.Q.cols() == d, "Q must be square");
  require(qp_data.P.rows() == d, "P rows must match Q");
  require(qp_data.q0.size() == d, "q0 size must match Q");
  // normalize empty blocks so downstream shapes are consistent
  if (m == 0) {
    qp_data.G_ineq.resize(0, d);
    qp_data.h0.resize(0);
    qp_data.H_x.resize(0, dim_x);
  }
  if (p == 0) {
    qp_data.A_eq.resize(0, d);
    qp_data.b0.resize(0);
    qp_data.B_x.resize(0, dim_x);
  }
  require(qp_data.G_ineq.cols() == d && qp_data.h0.size() == m &&
              qp_data.H_x.rows() == m && qp_data.H_x.cols() == dim_x,
          "inequality block shapes are inconsistent");
  require(qp_data.A_eq.cols() == d && qp_data.b0.size() == p &&
              qp_data.B_x.rows() == p && qp_data.B_x.cols() == dim_x,
          "equality block shapes are inconsistent");

  if ((qp_data.Q - qp_data.Q.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * (1.0 + qp_data.Q.cwiseAbs().maxCoeff()))
    throw NotPositiveDefinite("Q must be symmetric");
  Eigen::LLT<Matrix> llt(qp_data.Q);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("Q failed Cholesky factorization");

  auto qp = std::make_shared<const ParametricQp>(std::move(qp_data));

  BilevelProblem pb;
  pb.dim_y = d;
  pb.dim_x = dim_x;
  pb.n_ineq = m;
  pb.n_eq = p;
  pb.mu_g =
      Eigen::SelfAdjointEigenSolver<Matrix>(qp->Q).eigenvalues().minCoeff();
  pb.qp = qp;

  pb.g_value = [qp](const Vector& x, const Vector& y) {
    return 0.5 * y.dot(qp->Q * y) + qp->q_of(x).dot(y);
  };
  pb.g_grad_y = [qp](const Vector& x, const Vector& y) -> Vector {
    return qp->Q * y + qp->q_of(x);
  };
  pb.g_grad_x = [qp](const Vector&, const Vector& y) -> Vector {
    return qp->P.transpose() * y;
  };
  pb.g_hess_yy = [qp](const Vector&, const Vector&) -> Matrix { return qp->Q; };
  pb.g_hess_yx = [qp](const Vector&, const Vector&) -> Matrix { return qp->P; };

  pb.h_values = [qp](const Vector& x, const Vector& y) -> Vector {
    return qp->G_ineq * y - qp->h_rhs(x);
  };
  pb.h_jac_y = [qp](const Vector&, const Vector&) -> Matrix {
    return qp->G_ineq;
  };
  pb.h_jac_x = [qp](const Vector&, const Vector&) -> Matrix {
    return -qp->H_x;
  };
  pb.e_values = [qp](const Vector& x, const Vector& y) -> Vector {
    return qp->A_eq * y - qp->b_rhs(x);
  };
  pb.e_jac_y = [qp](const Vector&, const Vector&) -> Matrix { return qp->A_eq; };
  pb.e_jac_x = [qp](const Vector&, const Vector&) -> Matrix { return -qp->B_x; };

  pb.qp_form = [qp](const Vector& x) -> QpSnapshot {
    return QpSnapshot{qp->Q,   qp->q_of(x), qp->G_ineq,
                      qp->h_rhs(x), qp->A_eq,    qp->b_rhs(x)};
  };
  return pb;
}

BilevelProblem make_constraint_lp(ConstraintParamLp lp_data) {
  const int d = lp_data.dim;
  const int p = lp_data.rows;
  const int dim_x = lp_data.dim_x();
  require(d >= 1 && p >= 0, "dimensions must be positive");
  require(lp_data.linear_cost.size() == d, "linear_cost size must match dim");
  require(lp_data.A0_vec.size() == p * d && lp_data.W_A.rows() == p * d,
          "A map shapes are inconsistent");
  require(lp_data.b0.size() == p && lp_data.W_b.rows() == p &&
              lp_data.W_b.cols() == dim_x,
          "b map shapes are inconsistent");
  if (lp_data.epsilon_reg <= 0.0)
    throw NotStronglyConvex("epsilon_reg must be positive");

  auto lp = std::make_shared<const ConstraintParamLp>(std::move(lp_data));

  BilevelProblem pb;
  pb.dim_y = d;
  pb.dim_x = dim_x;
  pb.n_ineq = lp->nonnegativity ? d : 0;
  pb.n_eq = p;
  pb.mu_g = lp->epsilon_reg;

  pb.g_value = [lp](const Vector&, const Vector& y) {
    return 0.5 * lp->epsilon_reg * y.squaredNorm() + lp->linear_cost.dot(y);
  };
  pb.g_grad_y = [lp](const Vector&, const Vector& y) -> Vector {
    return lp->epsilon_reg * y + lp->linear_cost;
  };
  pb.g_grad_x = [lp, dim_x](const Vector&, const Vector&) -> Vector {
    return Vector::Zero(dim_x);
  };
  pb.g_hess_yy = [lp, d](const Vector&, const Vector&) -> Matrix {
    return lp->epsilon_reg * Matrix::Identity(d, d);
  };
  pb.g_hess_yx = [d, dim_x](const Vector&, const Vector&) -> Matrix {
    return Matrix::Zero(d, dim_x);
  };

  pb.e_values = [lp](const Vector& x, const Vector& y) -> Vector {
    return lp->A_of(x) * y - lp->b_of(x);
  };
  pb.e_jac_y = [lp](const Vector& x, const Vector&) -> Matrix {
    return lp->A_of(x);
  };
  pb.e_jac_x = [lp, d, dim_x](const Vector&, const Vector& y) -> Matrix {
    // d/dx_k [A(x) y - b(x)]_i = sum_j W_A[(i d + j), k] y_j - W_b(i, k)
    Matrix jac(lp->rows, dim_x);
    for (int i = 0; i < lp->rows; ++i)
      jac.row(i) =
          y.transpose() * lp->W_A.middleRows(i * d, d) - lp->W_b.row(i);
    return jac;
  };

  if (lp->nonnegativity) {
    pb.h_values = [](const Vector&, const Vector& y) -> Vector { return -y; };
    pb.h_jac_y = [d](const Vector&, const Vector&) -> Matrix {
      return -Matrix::Identity(d, d);
    };
    pb.h_jac_x = [d, dim_x](const Vector&, const Vector&) -> Matrix {
      return Matrix::Zero(d, dim_x);
    };
  }

  // cross second derivative of nu^T e(x, y); the y/y block stays eps * I
  pb.lag_hess_yx = [lp, d, dim_x](const Vector&, const Vector&, const Vector&,
                                  const Vector& nu) -> Matrix {
    Matrix out = Matrix::Zero(d, dim_x);
    for (int i = 0; i < lp->rows; ++i)
      out += nu[i] * lp->W_A.middleRows(i * d, d);
    return out;
  };

  pb.qp_form = [lp, d](const Vector& x) -> QpSnapshot {
    QpSnapshot s;
    s.Q = lp->epsilon_reg * Matrix::Identity(d, d);
    s.q = lp->linear_cost;
    if (lp->nonnegativity) {
      s.G = -Matrix::Identity(d, d);
      s.h = Vector::Zero(d);
    } else {
      s.G.resize(0, d);
      s.h.resize(0);
    }
    s.A = lp->A_of(x);
    s.b = lp->b_of(x);
    return s;
  };
  return pb;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

BilevelProblem preset_wall(double a) {
  if (!(a > 1.0)) throw std::invalid_argument("wall preset requires a > 1");
  ParametricQp qp;
  qp.Q = Matrix::Constant(1, 1, 1.0);
  qp.P = Matrix::Zero(1, 1);
  qp.q0 = Vector::Constant(1, -a);
  qp.G_ineq = Matrix::Constant(1, 1, 1.0);
  qp.h0 = Vector::Zero(1);
  qp.H_x = Matrix::Constant(1, 1, a);
  qp.A_eq.resize(0, 1);
  qp.b0.resize(0);
  qp.B_x.resize(0, 1);
  return make_parametric_qp(std::move(qp));
}

BilevelProblem preset_circle() {
  BilevelProblem pb;
  pb.dim_y = 1;
  pb.dim_x = 1;
  pb.n_ineq = 1;
  pb.n_eq = 0;
  pb.mu_g = 2.0;

  pb.g_value = [](const Vector&, const Vector& y) {
    return (y[0] - 2.0) * (y[0] - 2.0);
  };
  pb.g_grad_y = [](const Vector&, const Vector& y) -> Vector {
    return Vector::Constant(1, 2.0 * (y[0] - 2.0));
  };
  pb.g_grad_x = [](const Vector&, const Vector&) -> Vector {
    return Vector::Zero(1);
  };
  pb.g_hess_yy = [](const Vector&, const Vector&) -> Matrix {
    return Matrix::Constant(1, 1, 2.0);
  };
  pb.g_hess_yx = [](const Vector&, const Vector&) -> Matrix {
    return Matrix::Zero(1, 1);
  };

  pb.h_values = [](const Vector& x, const Vector& y) -> Vector {
    return Vector::Constant(1, x[0] * x[0] + y[0] * y[0] - 1.0);
  };
  pb.h_jac_y = [](const Vector&, const Vector& y) -> Matrix {
    return Matrix::Constant(1, 1, 2.0 * y[0]);
  };
  pb.h_jac_x = [](const Vector& x, const Vector&) -> Matrix {
    return Matrix::Constant(1, 1, 2.0 * x[0]);
  };

  // curvature of lambda * (x^2 + y^2 - 1) enters the y/y block only
  pb.lag_hess_yy = [](const Vector&, const Vector&, const Vector& lambda,
                      const Vector&) -> Matrix {
    return Matrix::Constant(1, 1, 2.0 + 2.0 * lambda[0]);
  };
  pb.lag_hess_yx = [](const Vector&, const Vector&, const Vector&,
                      const Vector&) -> Matrix { return Matrix::Zero(1, 1); };

  // The inequality is active for every |x| < 1 (the unconstrained minimizer
  // y = 2 lies outside), so y* = sqrt(1 - x^2) and stationarity fixes lambda.
  pb.specialized_solver = [](const BilevelProblem&, const Vector& x,
                             const SolverConfig& cfg) -> PrimalDualSolution {
    const double ax = std::abs(x[0]);
    if (ax > 1.0) throw Infeasible("circle: no feasible y for |x| > 1");
    if (ax > 0.999)
      throw LicqViolation("circle: constraint gradient vanishes near |x| = 1");
    const double y = std::sqrt(1.0 - x[0] * x[0]);
    const double lambda = (2.0 - y) / y;
    PrimalDualSolution sol;
    sol.y = Vector::Constant(1, y);
    sol.lambda = Vector::Constant(1, lambda);
    sol.nu.resize(0);
    sol.stationarity_residual =
        std::abs(2.0 * (y - 2.0) + lambda * 2.0 * y);
    sol.comp_slack_residual =
        std::abs(lambda * (x[0] * x[0] + y * y - 1.0));
    sol.feasibility_residual = std::max(0.0, x[0] * x[0] + y * y - 1.0);
    sol.iterations = 0;
    sol.certified = sol.max_residual() <= cfg.tol;
    sol.tol = cfg.tol;
    return sol;
  };
  return pb;
}

BilevelProblem preset_random_qp(std::uint64_t seed, int d, int m, int p) {
  if (d < 1 || m < 0 || p < 0 || p >= d)
    throw std::invalid_argument("random_qp requires d >= 1, m >= 0, 0 <= p < d");
  RandomStream rng = RandomStream::keyed(seed, 0x9d7f);
  const int dim_x = d;

  // SPD Q with eigenvalues log-uniform in [0.3, 6] (condition <= 20)
  Vector eigs(d);
  for (int i = 0; i < d; ++i)
    eigs[i] = std::exp(rng.uniform(std::log(0.3), std::log(6.0)));
  Eigen::HouseholderQR<Matrix> qr(rng.gaussian_matrix(d, d));
  Matrix V = qr.householderQ();
  Matrix Q = V * eigs.asDiagonal() * V.transpose();
  Q = 0.5 * (Q + Q.transpose());

  ParametricQp qp;
  qp.Q = Q;
  qp.P = 0.5 * rng.gaussian_matrix(d, dim_x);
  qp.q0 = rng.gaussian_vector(d);
  qp.A_eq = rng.gaussian_matrix(p, d);
  qp.B_x = 0.3 * rng.gaussian_matrix(p, dim_x);
  const Vector y0 = 0.5 * rng.gaussian_vector(d);
  qp.b0 = qp.A_eq * y0;

  // Equality-constrained minimizer at x = 0 anchors the inequality levels.
  Vector y_c;
  if (p == 0) {
    y_c = Q.llt().solve(-qp.q0);
  } else {
    Matrix kkt = Matrix::Zero(d + p, d + p);
    kkt.topLeftCorner(d, d) = Q;
    kkt.topRightCorner(d, p) = qp.A_eq.transpose();
    kkt.bottomLeftCorner(p, d) = qp.A_eq;
    Vector rhs(d + p);
    rhs.head(d) = -qp.q0;
    rhs.tail(p) = qp.b0;
    y_c = kkt.fullPivLu().solve(rhs).head(d);
  }

  qp.G_ineq = rng.gaussian_matrix(m, d);
  qp.H_x = 0.3 * rng.gaussian_matrix(m, dim_x);
  qp.h0 = Vector::Zero(m);
  const int n_cut = (m >= 2) ? std::max(1, m / 12) : 0;
  for (int i = 0; i < m; ++i) {
    const double level = qp.G_ineq.row(i).dot(y_c);
    if (i < n_cut)
      qp.h0[i] = level - rng.uniform(0.05, 0.3);  // cuts the anchor out
    else
      qp.h0[i] = level + rng.uniform(0.3, 1.5);   // comfortable slack
  }
  return make_parametric_qp(std::move(qp));
}

BilevelProblem preset(const PresetSpec& spec) {
  if (spec.name == "wall") return preset_wall(spec.a);
  if (spec.name == "circle") return preset_circle();
  if (spec.name == "random-qp" || spec.name == "random_qp")
    return preset_random_qp(spec.seed, spec.d, spec.m, spec.p);
  throw UnknownPreset("unknown preset: " + spec.name);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

// central difference of a scalar function along coordinate j
template <typename F>
double central_diff(F&& f, Vector v, int j, double h = 1e-5) {
  const double v0 = v[j];
  v[j] = v0 + h;
  const double up = f(v);
  v[j] = v0 - h;
  const double dn = f(v);
  return (up - dn) / (2.0 * h);
}

void check_close(double got, double want, double tol, const char* what) {
  if (std::abs(got - want) > tol * (1.0 + std::abs(want)))
    throw Error(std::string("validate_problem: ") + what + " mismatch: got " +
                std::to_string(got) + " expected " + std::to_string(want));
}

}  // namespace

void validate_problem(const BilevelProblem& pb, std::uint64_t seed,
                      int n_points, double tol) {
  RandomStream rng = RandomStream::keyed(seed, 0xa1);
  for (int pt = 0; pt < n_points; ++pt) {
    const Vector x = rng.gaussian_vector(pb.dim_x);
    const Vector y = rng.gaussian_vector(pb.dim_y);

    // e affine in y: jacobian constant across two probe points
    if (pb.n_eq > 0) {
      const Matrix j1 = pb.e_jac_y(x, y);
      const Matrix j2 = pb.e_jac_y(x, rng.gaussian_vector(pb.dim_y));
      if ((j1 - j2).cwiseAbs().maxCoeff() >
          1e-9 * (1.0 + j1.cwiseAbs().maxCoeff()))
        throw Error("validate_problem: e_jac_y varies with y (e not affine)");
    }

    // strong convexity spot check
    if (pb.g_hess_yy) {
      const Matrix H = pb.g_hess_yy(x, y);
      if ((H - H.transpose()).cwiseAbs().maxCoeff() >
          1e-9 * (1.0 + H.cwiseAbs().maxCoeff()))
        throw Error("validate_problem: g_hess_yy not symmetric");
      const double lam_min =
          Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().minCoeff();
      if (lam_min < pb.mu_g - 1e-7 * (1.0 + std::abs(pb.mu_g)))
        throw Error("validate_problem: g_hess_yy eigenvalue below mu_g");
    }

    // gradients against central differences
    const Vector gy = pb.g_grad_y(x, y);
    const Vector gx = pb.g_grad_x(x, y);
    for (int j = 0; j < pb.dim_y; ++j)
      check_close(gy[j],
                  central_diff([&](const Vector& yy) { return pb.g_value(x, yy); },
                               y, j),
                  tol, "g_grad_y");
    for (int j = 0; j < pb.dim_x; ++j)
      check_close(gx[j],
                  central_diff([&](const Vector& xx) { return pb.g_value(xx, y); },
                               x, j),
                  tol, "g_grad_x");

    auto check_jac = [&](int n_rows, const auto& values, const auto& jac_y,
                         const auto& jac_x, const char* what) {
      if (n_rows == 0) return;
      const Matrix jy = jac_y(x, y);
      const Matrix jx = jac_x(x, y);
      for (int i = 0; i < n_rows; ++i) {
        for (int j = 0; j < pb.dim_y; ++j)
          check_close(jy(i, j),
                      central_diff(
                          [&](const Vector& yy) { return values(x, yy)[i]; }, y,
                          j),
                      tol, what);
        for (int j = 0; j < pb.dim_x; ++j)
          check_close(jx(i, j),
                      central_diff(
                          [&](const Vector& xx) { return values(xx, y)[i]; }, x,
                          j),
                      tol, what);
      }
    };
    if (pb.n_ineq > 0)
      check_jac(pb.n_ineq, pb.h_values, pb.h_jac_y, pb.h_jac_x, "h jacobians");
    if (pb.n_eq > 0)
      check_jac(pb.n_eq, pb.e_values, pb.e_jac_y, pb.e_jac_x, "e jacobians");

    // Lagrangian second derivatives against differences of its y-gradient
    if (pb.g_hess_yy) {
      const Vector lambda =
          pb.n_ineq > 0 ? rng.uniform_vector(pb.n_ineq, 0.0, 2.0) : Vector();
      const Vector nu = pb.n_eq > 0 ? rng.gaussian_vector(pb.n_eq) : Vector();
      auto lag_grad_y = [&](const Vector& xx, const Vector& yy) -> Vector {
        Vector g = pb.g_grad_y(xx, yy);
        if (pb.n_ineq > 0) g += pb.h_jac_y(xx, yy).transpose() * lambda;
        if (pb.n_eq > 0) g += pb.e_jac_y(xx, yy).transpose() * nu;
        return g;
      };
      const Matrix hyy = pb.lagrangian_hess_yy(x, y, lambda, nu);
      const Matrix hyx = pb.lagrangian_hess_yx(x, y, lambda, nu);
      for (int i = 0; i < pb.dim_y; ++i) {
        for (int j = 0; j < pb.dim_y; ++j)
          check_close(hyy(i, j),
                      central_diff(
                          [&](const Vector& yy) { return lag_grad_y(x, yy)[i]; },
                          y, j),
                      tol, "lag_hess_yy");
        for (int j = 0; j < pb.dim_x; ++j)
          check_close(hyx(i, j),
                      central_diff(
                          [&](const Vector& xx) { return lag_grad_y(xx, y)[i]; },
                          x, j),
                      tol, "lag_hess_yx");
      }
    }
  }
}

}  // namespace ffo
