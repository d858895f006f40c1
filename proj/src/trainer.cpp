#include "ffo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ffo/rng.hpp"

namespace ffo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

const char* oracle_name(OracleKind kind) {
  switch (kind) {
    case OracleKind::exact: return "exact";
    case OracleKind::ffo: return "ffo";
    case OracleKind::smoothed: return "smoothed";
  }
  return "unknown";
}

OracleKind parse_oracle(const std::string& name) {
  if (name == "exact") return OracleKind::exact;
  if (name == "ffo") return OracleKind::ffo;
  if (name == "smoothed") return OracleKind::smoothed;
  throw Error("unknown oracle: " + name);
}

void write_csv(std::ostream& os, const TrainTrace& trace) {
  os << "step,loss,grad_norm,forward_s,backward_s,oracle\n";
  os.precision(12);
  for (const TrainRecord& r : trace.records)
    os << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.forward_s
       << ',' << r.backward_s << ',' << r.oracle << '\n';
}

BatchGradient batch_gradient(const TaskSpec& task, const Vector& theta,
                             const std::vector<int>& batch, OracleKind oracle,
                             const TrainOptions& opts) {
  if (batch.empty())
    throw std::invalid_argument("batch_gradient: empty batch");
  BatchGradient out;
  out.grad = Vector::Zero(task.theta_dim());

  for (int i : batch) {
    const BilevelProblem& pb = task.problem_of(i);
    const Vector x = task.param_of(theta, i);
    const Vector direct = Vector::Zero(pb.dim_x);

    const auto t_fwd = Clock::now();
    const PrimalDualSolution sol = solve_lower(pb, x, opts.solver);
    out.forward_s += seconds_since(t_fwd);
    const auto [loss, c] = task.loss_and_grad(sol.y, i);
    out.loss += loss;

    const auto t_bwd = Clock::now();
    Vector g_x;
    switch (oracle) {
      case OracleKind::exact: {
        const ActiveSet act = identify_active(pb, x, sol);
        g_x = direct + exact_jacobian(pb, x, sol, act).transpose() * c;
        break;
      }
      case OracleKind::ffo: {
        FfoOptions fo;
        fo.eps = opts.eps;
        fo.solver = opts.solver;
        g_x = ffo_from_solution(pb, x, c, direct, sol, fo).grad;
        break;
      }
      case OracleKind::smoothed: {
        SmoothedConfig sc = opts.smoothed;
        sc.seed = opts.smoothed.seed ^
                  (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(i + 1));
        g_x = smoothed_hypergradient(pb, x, c, direct, sc).grad;
        break;
      }
    }
    out.grad += task.chain_to_theta(g_x, theta, i);
    out.backward_s += seconds_since(t_bwd);
  }

  const double inv = 1.0 / double(batch.size());
  out.grad *= inv;
  out.loss *= inv;
  return out;
}

TrainTrace train(const TaskSpec& task, const TrainOptions& opts) {
  if (opts.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (!(opts.lr >= 0.0)) throw std::invalid_argument("train: lr must be >= 0");
  const int n = task.n();

  TrainTrace trace;
  trace.oracle = oracle_name(opts.oracle);
  Vector theta = task.theta0;

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  const int bs = opts.batch_size <= 0 || opts.batch_size >= n ? n
                                                              : opts.batch_size;

  for (int step = 0; step < opts.steps; ++step) {
    std::vector<int> batch;
    if (bs == n) {
      batch = all;
    } else {
      // seeded partial Fisher-Yates: deterministic per (seed, step)
      std::vector<int> pool = all;
      RandomStream rs =
          RandomStream::keyed(opts.seed, static_cast<std::uint64_t>(step));
      for (int j = 0; j < bs; ++j) {
        const int r =
            j + static_cast<int>(rs.next_u64() % static_cast<std::uint64_t>(n - j));
        std::swap(pool[j], pool[r]);
      }
      batch.assign(pool.begin(), pool.begin() + bs);
    }

    const BatchGradient bg =
        batch_gradient(task, theta, batch, opts.oracle, opts);
    TrainRecord rec;
    rec.step = step;
    rec.loss = bg.loss;
    rec.grad_norm = bg.grad.norm();
    rec.forward_s = bg.forward_s;
    rec.backward_s = bg.backward_s;
    rec.oracle = trace.oracle;
    trace.records.push_back(rec);

    theta -= opts.lr * bg.grad;
  }

  trace.theta_final = theta;
  return trace;
}

// ---------------------------------------------------------------------------
// Decision-focused learning task
// ---------------------------------------------------------------------------

TaskSpec dfl_task(std::uint64_t seed, int n_samples, int feat_dim, int dim_y,
                  int m_ineq) {
  if (n_samples < 1 || feat_dim < 1 || dim_y < 1 || m_ineq < 1)
    throw std::invalid_argument("dfl_task: all sizes must be >= 1");

  RandomStream rs = RandomStream::keyed(seed, 0xdf1);

  // fixed SPD Q with eigenvalues log-uniform in [0.3, 6]
  ParametricQp qp;
  {
    Vector eigs(dim_y);
    for (int i = 0; i < dim_y; ++i)
      eigs[i] = std::exp(rs.uniform(std::log(0.3), std::log(6.0)));
    const Matrix raw = rs.gaussian_matrix(dim_y, dim_y);
    const Matrix V = Eigen::HouseholderQR<Matrix>(raw).householderQ();
    Matrix Q = V * eigs.asDiagonal() * V.transpose();
    qp.Q = 0.5 * (Q + Q.transpose());
  }
  qp.P = -Matrix::Identity(dim_y, dim_y);  // x is the predicted utility vector
  qp.q0 = Vector::Zero(dim_y);
  qp.G_ineq = rs.gaussian_matrix(m_ineq, dim_y);
  qp.h0 = rs.uniform_vector(m_ineq, 0.5, 1.5);  // origin strictly feasible
  qp.H_x = Matrix::Zero(m_ineq, dim_y);
  qp.A_eq = Matrix::Zero(0, dim_y);
  qp.b0 = Vector::Zero(0);
  qp.B_x = Matrix::Zero(0, dim_y);

  TaskSpec task;
  task.name = "dfl";
  task.problems.push_back(make_parametric_qp(std::move(qp)));
  auto feats = std::make_shared<std::vector<Vector>>();
  auto targs = std::make_shared<std::vector<Vector>>();
  for (int i = 0; i < n_samples; ++i) {
    feats->push_back(rs.gaussian_vector(feat_dim));
    targs->push_back(rs.gaussian_vector(dim_y));
  }
  task.features = *feats;
  task.targets = *targs;
  task.theta0 = 0.1 * rs.gaussian_vector(dim_y * feat_dim + dim_y);

  task.param_of = [dim_y, feat_dim, feats](const Vector& theta, int i) {
    Vector x(dim_y);
    const Vector& f = (*feats)[static_cast<size_t>(i)];
    for (int r = 0; r < dim_y; ++r)
      x[r] = theta.segment(r * feat_dim, feat_dim).dot(f) +
             theta[dim_y * feat_dim + r];
    return x;
  };
  task.chain_to_theta = [dim_y, feat_dim, feats](const Vector& g_x,
                                                 const Vector&, int i) {
    Vector g = Vector::Zero(dim_y * feat_dim + dim_y);
    const Vector& f = (*feats)[static_cast<size_t>(i)];
    for (int r = 0; r < dim_y; ++r) {
      g.segment(r * feat_dim, feat_dim) = g_x[r] * f;
      g[dim_y * feat_dim + r] = g_x[r];
    }
    return g;
  };
  task.loss_and_grad = [targs](const Vector& y, int i) {
    const Vector& t = (*targs)[static_cast<size_t>(i)];
    return std::make_pair(t.dot(y), t);
  };
  task.meta = {{"task", "dfl"},
               {"seed", seed},
               {"n_samples", n_samples},
               {"feat_dim", feat_dim},
               {"dim_y", dim_y},
               {"m_ineq", m_ineq}};
  return task;
}

// ---------------------------------------------------------------------------
// Grid-puzzle task
// ---------------------------------------------------------------------------

namespace {

int isqrt_exact(int n) {
  const int r = static_cast<int>(std::lround(std::sqrt(double(n))));
  if (r * r != n)
    throw std::invalid_argument("grid puzzles require n to be a perfect square");
  return r;
}

}  // namespace

int count_sudoku_solutions(const std::vector<int>& puzzle, int n, int cap) {
  const int br = isqrt_exact(n);
  if (static_cast<int>(puzzle.size()) != n * n)
    throw std::invalid_argument("count_sudoku_solutions: bad grid size");

  std::vector<int> grid = puzzle;
  std::vector<unsigned> row_used(n, 0), col_used(n, 0), box_used(n, 0);
  auto box_of = [&](int r, int c) { return (r / br) * br + c / br; };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const int v = grid[r * n + c];
      if (v == 0) continue;
      const unsigned bit = 1u << (v - 1);
      if ((row_used[r] & bit) || (col_used[c] & bit) ||
          (box_used[box_of(r, c)] & bit))
        return 0;  // clues already conflict
      row_used[r] |= bit;
      col_used[c] |= bit;
      box_used[box_of(r, c)] |= bit;
    }

  int found = 0;
  std::function<void()> rec = [&]() {
    if (found >= cap) return;
    // most-constrained empty cell
    int best = -1, best_count = n + 1;
    unsigned best_mask = 0;
    for (int idx = 0; idx < n * n; ++idx) {
      if (grid[idx] != 0) continue;
      const int r = idx / n, c = idx % n;
      const unsigned used =
          row_used[r] | col_used[c] | box_used[box_of(r, c)];
      const unsigned free = ~used & ((1u << n) - 1u);
      const int cnt = __builtin_popcount(free);
      if (cnt == 0) return;  // dead end
      if (cnt < best_count) {
        best_count = cnt;
        best = idx;
        best_mask = free;
      }
    }
    if (best < 0) {
      ++found;
      return;
    }
    const int r = best / n, c = best % n, b = box_of(r, c);
    for (int v = 1; v <= n; ++v) {
      const unsigned bit = 1u << (v - 1);
      if (!(best_mask & bit)) continue;
      grid[best] = v;
      row_used[r] |= bit;
      col_used[c] |= bit;
      box_used[b] |= bit;
      rec();
      grid[best] = 0;
      row_used[r] &= ~bit;
      col_used[c] &= ~bit;
      box_used[b] &= ~bit;
      if (found >= cap) return;
    }
  };
  rec();
  return found;
}

std::vector<SudokuInstance> generate_sudoku(int n, int count,
                                            std::uint64_t seed) {
  const int br = isqrt_exact(n);
  std::vector<SudokuInstance> out;
  out.reserve(static_cast<size_t>(count));

  for (int inst = 0; inst < count; ++inst) {
    RandomStream rs = RandomStream::keyed(seed, static_cast<std::uint64_t>(inst));

    // canonical valid grid
    std::vector<int> grid(n * n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        grid[r * n + c] = (br * (r % br) + r / br + c) % n + 1;

    auto rand_perm = [&](int k) {
      std::vector<int> p(k);
      std::iota(p.begin(), p.end(), 0);
      for (int j = k - 1; j > 0; --j)
        std::swap(p[j], p[rs.next_u64() % static_cast<std::uint64_t>(j + 1)]);
      return p;
    };

    // symmetry scramble: digit relabel, rows within bands, columns within
    // stacks, whole bands, whole stacks
    const std::vector<int> relabel = rand_perm(n);
    std::vector<int> row_map(n), col_map(n);
    const std::vector<int> band = rand_perm(br), stack = rand_perm(br);
    for (int b = 0; b < br; ++b) {
      const std::vector<int> in_band = rand_perm(br), in_stack = rand_perm(br);
      for (int j = 0; j < br; ++j) {
        row_map[b * br + j] = band[b] * br + in_band[j];
        col_map[b * br + j] = stack[b] * br + in_stack[j];
      }
    }
    std::vector<int> scrambled(n * n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        scrambled[row_map[r] * n + col_map[c]] =
            relabel[grid[r * n + c] - 1] + 1;

    // mask cells in random order while the completion stays unique
    SudokuInstance si;
    si.solution = scrambled;
    si.puzzle = scrambled;
    const std::vector<int> order = rand_perm(n * n);
    for (int idx : order) {
      const int saved = si.puzzle[idx];
      si.puzzle[idx] = 0;
      if (count_sudoku_solutions(si.puzzle, n, 2) != 1) si.puzzle[idx] = saved;
    }
    out.push_back(std::move(si));
  }
  return out;
}

Vector grid_one_hot(const std::vector<int>& grid, int n) {
  if (static_cast<int>(grid.size()) != n * n)
    throw std::invalid_argument("grid_one_hot: bad grid size");
  Vector v = Vector::Zero(n * n * n);
  for (int cell = 0; cell < n * n; ++cell)
    if (grid[cell] > 0) v[cell * n + grid[cell] - 1] = 1.0;
  return v;
}

TaskSpec sudoku_task(int n, int n_samples, double epsilon_reg,
                     std::uint64_t seed) {
  const int d = n * n * n;
  const int p = n * n;
  TaskSpec task;
  task.name = "sudoku";

  const auto instances = generate_sudoku(n, n_samples, seed);
  auto targs = std::make_shared<std::vector<Vector>>();
  for (const SudokuInstance& si : instances) {
    const Vector clue = grid_one_hot(si.puzzle, n);
    task.features.push_back(clue);
    targs->push_back(grid_one_hot(si.solution, n));
    ConstraintParamLp lp = ConstraintParamLp::direct_reshape(
        p, d, epsilon_reg, Vector(-clue), /*nonnegativity=*/true);
    task.problems.push_back(make_constraint_lp(std::move(lp)));
  }
  task.targets = *targs;

  // shared parameter: theta = [vec_rowmajor(A); b], identical for every
  // instance; start from a random A with a strictly positive feasible point
  RandomStream rs = RandomStream::keyed(seed, 0x50d0);
  const Matrix A0 = 0.3 * rs.gaussian_matrix(p, d);
  const Vector y_feas = rs.uniform_vector(d, 0.2, 1.0);
  Vector theta0(p * d + p);
  for (int r = 0; r < p; ++r) theta0.segment(r * d, d) = A0.row(r);
  theta0.tail(p) = A0 * y_feas;
  task.theta0 = theta0;

  task.param_of = [](const Vector& theta, int) { return theta; };
  task.chain_to_theta = [](const Vector& g_x, const Vector&, int) {
    return g_x;
  };
  task.loss_and_grad = [targs](const Vector& y, int i) {
    const Vector diff = y - (*targs)[static_cast<size_t>(i)];
    return std::make_pair(diff.squaredNorm(), Vector(2.0 * diff));
  };
  task.meta = {{"task", "sudoku"},
               {"n", n},
               {"n_samples", n_samples},
               {"epsilon_reg", epsilon_reg},
               {"seed", seed}};
  return task;
}

}  // namespace ffo
