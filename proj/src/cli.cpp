#include "ffo/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "ffo/hypergradient.hpp"
#include "ffo/problem.hpp"
#include "ffo/smoothed.hpp"
#include "ffo/trainer.hpp"

namespace ffo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream os(path);
  if (!os) throw Error("cannot open output file: " + path);
  os << text;
  if (!text.empty() && text.back() != '\n') os << '\n';
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BilevelProblem build_problem(const RunConfig& cfg) {
  if (!cfg.problem_file.empty()) {
    std::ifstream is(cfg.problem_file);
    if (!is) throw Error("cannot open problem file: " + cfg.problem_file);
    nlohmann::json j;
    is >> j;
    return make_parametric_qp(j.get<ParametricQp>());
  }
  PresetSpec spec;
  spec.name = cfg.preset;
  spec.a = cfg.a;
  spec.seed = cfg.seed;
  spec.d = cfg.d;
  spec.m = cfg.m;
  spec.p = cfg.p;
  return preset(spec);
}

Vector eval_point(const RunConfig& cfg, const BilevelProblem& pb) {
  if (!cfg.x.empty()) {
    if (static_cast<int>(cfg.x.size()) != pb.dim_x)
      throw DimensionMismatch("--x has wrong dimension for the problem");
    return Eigen::Map<const Vector>(cfg.x.data(),
                                    static_cast<Eigen::Index>(cfg.x.size()));
  }
  if (cfg.problem_file.empty() && cfg.preset == "wall")
    return Vector::Constant(1, 0.9);
  return Vector::Zero(pb.dim_x);
}

// F(x) = c^T y*(x) differentiated by central differences coordinate-wise
Vector fd_over_x(const BilevelProblem& pb, const Vector& x, const Vector& c,
                 const SolverConfig& scfg) {
  Vector g(pb.dim_x);
  const double t = 1e-6 * (1.0 + x.cwiseAbs().maxCoeff());
  for (int j = 0; j < pb.dim_x; ++j) {
    Vector xp = x, xm = x;
    xp[j] += t;
    xm[j] -= t;
    const double fp = c.dot(solve_lower(pb, xp, scfg).y);
    const double fm = c.dot(solve_lower(pb, xm, scfg).y);
    g[j] = (fp - fm) / (2.0 * t);
  }
  return g;
}

int failure_exit(const std::exception& e) {
  std::cerr << "error: " << e.what() << '\n';
  return 2;
}

}  // namespace

int cmd_compare(const RunConfig& cfg) {
  try {
    const BilevelProblem pb = build_problem(cfg);
    const Vector x = eval_point(cfg, pb);
    const Vector c = Vector::Ones(pb.dim_y);
    const Vector direct = Vector::Zero(pb.dim_x);
    SolverConfig scfg;
    scfg.tol = 1e-10;
    scfg.max_iter = 200;

    FfoOptions fopts;
    fopts.eps = cfg.delta;
    fopts.solver = scfg;
    fopts.strict = cfg.strict;

    const auto t_fwd = Clock::now();
    const PrimalDualSolution sol = solve_lower(pb, x, scfg);
    const double forward_s = seconds_since(t_fwd);

    const auto t_ffo = Clock::now();
    const HypergradientReport rep = ffo_from_solution(pb, x, c, direct, sol, fopts);
    const double ffo_s = seconds_since(t_ffo);

    // The square-KKT and projection oracles are undefined at a degenerate
    // point; outside strict mode they are reported as null and excluded from
    // the pairwise errors rather than aborting the comparison.
    const auto t_exact = Clock::now();
    const ActiveSet act = identify_active(pb, x, sol, fopts.tol_act);
    std::optional<Vector> grad_exact;
    try {
      grad_exact = Vector(direct + exact_jacobian(pb, x, sol, act).transpose() * c);
    } catch (const SingularKkt& e) {
      std::cerr << "exact oracle unavailable: " << e.what() << '\n';
    }
    const double exact_s = seconds_since(t_exact);

    const auto t_proj = Clock::now();
    GhostOptions gopts;
    gopts.strict = cfg.strict;
    const GhostProblem ghost = build_ghost(pb, x, sol, act, gopts);
    std::optional<Vector> grad_proj;
    try {
      const Matrix J_proj = projection_jacobian(
          ghost, ghost.hess_yy(x, sol.y), ghost.hess_yx(x, sol.y));
      grad_proj = Vector(direct + J_proj.transpose() * c);
    } catch (const RankDeficient& e) {
      std::cerr << "projection oracle unavailable: " << e.what() << '\n';
    }
    const double proj_s = seconds_since(t_proj);

    const auto t_fd = Clock::now();
    const Vector grad_fd = direct + fd_over_x(pb, x, c, scfg);
    const double fd_s = seconds_since(t_fd);

    const double bound = cfg.bound > 0.0 ? cfg.bound : 20.0 * cfg.delta;
    nlohmann::json errors = nlohmann::json::object();
    double max_error = 0.0;
    auto pair_error = [&](const char* key, const std::optional<Vector>& a,
                          const std::optional<Vector>& b) {
      if (!a || !b) return;
      const double err = (*a - *b).norm();
      errors[key] = err;
      max_error = std::max(max_error, err);
    };
    const std::optional<Vector> grad_ffo(rep.grad), fd_opt(grad_fd);
    pair_error("ffo_exact", grad_ffo, grad_exact);
    pair_error("ffo_proj", grad_ffo, grad_proj);
    pair_error("ffo_fd", grad_ffo, fd_opt);
    pair_error("exact_proj", grad_exact, grad_proj);
    pair_error("exact_fd", grad_exact, fd_opt);
    pair_error("proj_fd", grad_proj, fd_opt);

    auto opt_json = [](const std::optional<Vector>& v) {
      return v ? nlohmann::json(to_std(*v)) : nlohmann::json();
    };
    nlohmann::json out = {
        {"preset", cfg.problem_file.empty() ? cfg.preset : cfg.problem_file},
        {"x", to_std(x)},
        {"delta", rep.delta},
        {"bound", bound},
        {"grad_ffo", to_std(rep.grad)},
        {"grad_exact", opt_json(grad_exact)},
        {"grad_proj", opt_json(grad_proj)},
        {"grad_fd", to_std(grad_fd)},
        {"errors", errors},
        {"max_error", max_error},
        {"certified", rep.certified},
        {"timings",
         {{"forward_s", forward_s},
          {"ffo_backward_s", ffo_s},
          {"exact_s", exact_s},
          {"proj_s", proj_s},
          {"fd_s", fd_s}}}};
    write_output(cfg.out, out.dump(2));
    return max_error <= bound ? 0 : 1;
  } catch (const DegenerateActiveSet& e) {
    std::cerr << "degenerate: " << e.what() << '\n';
    return 3;
  } catch (const LicqViolation& e) {
    std::cerr << "degenerate: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    return failure_exit(e);
  }
}

int cmd_train(const RunConfig& cfg) {
  try {
    TaskSpec task;
    if (cfg.task == "dfl") {
      task = dfl_task(cfg.seed, cfg.n_samples, /*feat_dim=*/3, cfg.d, cfg.m);
    } else if (cfg.task == "sudoku") {
      task = sudoku_task(cfg.n, cfg.n_samples, cfg.epsilon_reg, cfg.seed);
    } else {
      throw Error("unknown task: " + cfg.task);
    }

    TrainOptions opts;
    opts.steps = cfg.steps;
    // the sudoku constraint-learning loss is orders of magnitude steeper than
    // the dfl one, so the default step size differs per task
    opts.lr = cfg.lr >= 0.0 ? cfg.lr : (cfg.task == "sudoku" ? 1e-4 : 0.05);
    opts.eps = cfg.eps;
    opts.seed = cfg.seed;
    opts.oracle = parse_oracle(cfg.oracle);

    const TrainTrace trace = train(task, opts);
    std::ostringstream csv;
    write_csv(csv, trace);
    write_output(cfg.out, csv.str());
    return trace.final_loss() < trace.initial_loss() ? 0 : 1;
  } catch (const std::exception& e) {
    return failure_exit(e);
  }
}

int cmd_bench(const RunConfig& cfg) {
  try {
    if (cfg.sizes.empty()) throw Error("bench: sizes must be non-empty");
    for (size_t i = 1; i < cfg.sizes.size(); ++i)
      if (cfg.sizes[i] <= cfg.sizes[i - 1])
        throw Error("bench: sizes must be strictly increasing");
    const int reps = std::max(1, cfg.reps);

    SolverConfig scfg;
    scfg.tol = 1e-10;
    scfg.max_iter = 200;

    std::ostringstream csv;
    csv << "size,forward_s,ffo_backward_s,exact_backward_s\n";
    csv.precision(9);
    for (int size : cfg.sizes) {
      const BilevelProblem pb = preset_random_qp(cfg.seed, size, size, 0);
      const Vector x = Vector::Zero(pb.dim_x);
      const Vector c = Vector::Ones(pb.dim_y);
      const Vector direct = Vector::Zero(pb.dim_x);
      FfoOptions fopts;
      fopts.eps = cfg.delta;
      fopts.solver = scfg;

      std::vector<double> fwd, bwd_ffo, bwd_exact;
      for (int rep = 0; rep <= reps; ++rep) {  // rep 0 is a discarded warm-up
        const auto t0 = Clock::now();
        const PrimalDualSolution sol = solve_lower(pb, x, scfg);
        const double t_forward = seconds_since(t0);

        const auto t1 = Clock::now();
        (void)ffo_from_solution(pb, x, c, direct, sol, fopts);
        const double t_ffo = seconds_since(t1);

        const auto t2 = Clock::now();
        const ActiveSet act = identify_active(pb, x, sol, fopts.tol_act);
        (void)(direct + exact_jacobian(pb, x, sol, act).transpose() * c);
        const double t_exact = seconds_since(t2);

        if (rep == 0) continue;
        fwd.push_back(t_forward);
        bwd_ffo.push_back(t_ffo);
        bwd_exact.push_back(t_exact);
      }
      csv << size << ',' << median(fwd) << ',' << median(bwd_ffo) << ','
          << median(bwd_exact) << '\n';
    }
    write_output(cfg.out, csv.str());
    return 0;
  } catch (const std::exception& e) {
    return failure_exit(e);
  }
}

int cmd_preset_info(const RunConfig& cfg) {
  try {
    const BilevelProblem pb = build_problem(cfg);
    const Vector x0 = eval_point(cfg, pb);
    nlohmann::json out = {
        {"preset", cfg.problem_file.empty() ? cfg.preset : cfg.problem_file},
        {"dim_y", pb.dim_y},
        {"dim_x", pb.dim_x},
        {"n_ineq", pb.n_ineq},
        {"n_eq", pb.n_eq},
        {"mu_g", pb.mu_g},
        {"has_qp_form", static_cast<bool>(pb.qp_form)},
        {"has_specialized_solver", static_cast<bool>(pb.specialized_solver)},
        {"default_x", to_std(x0)}};
    if (pb.qp) out["qp"] = *pb.qp;
    write_output(cfg.out, out.dump(2));
    return 0;
  } catch (const std::exception& e) {
    return failure_exit(e);
  }
}

}  // namespace ffo
