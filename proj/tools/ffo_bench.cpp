#include <CLI11.hpp>

#include "ffo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hypergradient oracle comparison, training, and timing driver"};
  app.require_subcommand(1);
  ffo::RunConfig cfg;

  auto add_problem_flags = [&](CLI::App* sub) {
    sub->add_option("--preset", cfg.preset, "wall | circle | random-qp");
    sub->add_option("--problem-file", cfg.problem_file,
                    "JSON quadratic problem; overrides --preset");
    sub->add_option("--a", cfg.a, "wall slope (a > 1)");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--d", cfg.d, "lower-level dimension");
    sub->add_option("--m", cfg.m, "inequality count");
    sub->add_option("--p", cfg.p, "equality count");
    sub->add_option("--x", cfg.x, "evaluation point (repeat per coordinate)");
    sub->add_option("--out", cfg.out, "output path (default stdout)");
  };

  CLI::App* compare = app.add_subcommand(
      "compare", "run all hypergradient oracles at one point");
  add_problem_flags(compare);
  compare->add_option("--delta", cfg.delta, "probe size / accuracy target");
  compare->add_option("--bound", cfg.bound,
                      "pairwise error bound (default 20*delta)");
  compare->add_flag("--strict", cfg.strict, "fail on degeneracy instead of downgrading");

  CLI::App* train = app.add_subcommand("train", "gradient-descent training run");
  train->add_option("task", cfg.task, "dfl | sudoku")->required();
  train->add_option("--oracle", cfg.oracle, "exact | ffo | smoothed");
  train->add_option("--steps", cfg.steps, "outer iterations");
  train->add_option("--lr", cfg.lr,
                    "learning rate (default: dfl 0.05, sudoku 1e-4)");
  train->add_option("--eps", cfg.eps, "estimator accuracy target");
  train->add_option("--seed", cfg.seed, "RNG seed");
  train->add_option("--d", cfg.d, "DFL lower-level dimension");
  train->add_option("--m", cfg.m, "DFL inequality count");
  train->add_option("--n", cfg.n, "puzzle side length");
  train->add_option("--n-samples", cfg.n_samples, "training instances");
  train->add_option("--epsilon-reg", cfg.epsilon_reg, "LP regularizer");
  train->add_option("--out", cfg.out, "output path (default stdout)");

  CLI::App* bench =
      app.add_subcommand("bench", "forward/backward timing sweep");
  bench->add_option("--sizes", cfg.sizes, "problem sizes (strictly increasing)");
  bench->add_option("--reps", cfg.reps, "repetitions per size (median reported)");
  bench->add_option("--seed", cfg.seed, "RNG seed");
  bench->add_option("--delta", cfg.delta, "probe size for the estimator");
  bench->add_option("--out", cfg.out, "output path (default stdout)");

  CLI::App* info = app.add_subcommand("preset-info", "describe a problem preset");
  add_problem_flags(info);

  CLI11_PARSE(app, argc, argv);

  if (compare->parsed()) return ffo::cmd_compare(cfg);
  if (train->parsed()) return ffo::cmd_train(cfg);
  if (bench->parsed()) return ffo::cmd_bench(cfg);
  if (info->parsed()) return ffo::cmd_preset_info(cfg);
  return 2;
}
