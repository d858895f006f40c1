#include "ffo/smoothed.hpp"

#include <chrono>
#include <cmath>

#include "ffo/rng.hpp"

namespace ffo {

namespace {

// Shifted copy h(x, y) - eta <= 0. Quadratic problems shift normalized rows
// (unit 2-norm) so one rho works across differently scaled constraints.
BilevelProblem shifted_problem(const BilevelProblem& pb, const Vector& eta) {
  if (pb.qp) {
    ParametricQp qp = *pb.qp;
    for (int i = 0; i < qp.m(); ++i) {
      const double nrm = qp.G_ineq.row(i).norm();
      const double s = nrm > 0.0 ? 1.0 / nrm : 1.0;
      qp.G_ineq.row(i) *= s;
      qp.h0[i] = qp.h0[i] * s + eta[i];
      qp.H_x.row(i) *= s;
    }
    return make_parametric_qp(std::move(qp));
  }
  BilevelProblem out = pb;
  out.qp.reset();
  out.qp_form = nullptr;
  out.specialized_solver = nullptr;  // closed forms do not know about eta
  auto h_src = pb.h_values;
  out.h_values = [h_src, eta](const Vector& x, const Vector& y) {
    return Vector(h_src(x, y) - eta);
  };
  return out;
}

}  // namespace

SmoothedReport smoothed_hypergradient(const BilevelProblem& pb, const Vector& x,
                                      const Vector& c, const Vector& direct,
                                      const SmoothedConfig& cfg) {
  if (!(cfg.rho > 0.0))
    throw std::invalid_argument("smoothed_hypergradient: rho must be > 0");
  if (cfg.n_samples < 1)
    throw std::invalid_argument("smoothed_hypergradient: n_samples must be >= 1");
  if (pb.n_ineq == 0)
    throw std::invalid_argument(
        "smoothed_hypergradient: problem has no inequalities to smooth");

  const auto t0 = std::chrono::steady_clock::now();
  const int m = pb.n_ineq;
  const int nx = pb.dim_x;

  FfoOptions opts;
  opts.eps = cfg.inner_eps > 0.0 ? cfg.inner_eps : cfg.rho * 1e-3 / m;
  opts.tol_act = cfg.tol_act;
  opts.solver = cfg.solver;
  opts.strict = false;

  Vector mean = Vector::Zero(nx);
  Vector m2 = Vector::Zero(nx);  // running sum of squared deviations
  int n_degenerate = 0;

  for (int s = 0; s < cfg.n_samples; ++s) {
    RandomStream rs = RandomStream::keyed(cfg.seed, static_cast<std::uint64_t>(s));
    const Vector eta = rs.uniform_vector(m, -cfg.rho, cfg.rho);
    const BilevelProblem shifted = shifted_problem(pb, eta);
    const HypergradientReport rep =
        ffo_hypergradient(shifted, x, c, direct, opts);
    if (rep.active.degenerate) ++n_degenerate;

    const Vector delta = rep.grad - mean;
    mean += delta / double(s + 1);
    m2.array() += delta.array() * (rep.grad - mean).array();
  }

  SmoothedReport out;
  out.grad = mean;
  out.n_samples = cfg.n_samples;
  out.n_degenerate = n_degenerate;
  if (cfg.n_samples > 1)
    out.stderr_ = (m2 / double(cfg.n_samples - 1) / double(cfg.n_samples))
                      .cwiseSqrt();
  else
    out.stderr_ = Vector::Zero(nx);
  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

}  // namespace ffo
