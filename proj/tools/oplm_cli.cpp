// oplm: train, evaluate and inspect meta-learners from the command line.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "oplm/analysis.hpp"
#include "oplm/harness.hpp"

using namespace oplm;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  void apply(RunConfig& c) const {
    if (seed) c.seed = *seed;
    if (out) c.out_dir = *out;
  }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Override the run seed");
  cmd->add_option("--out", o.out, "Override the output directory");
}

void print_summary(const std::string& what, const EvalResult& r) {
  std::cout << what << " loss " << r.loss.mean << " +- " << r.loss.ci95;
  if (r.accuracy.n) std::cout << "  accuracy " << r.accuracy.mean << " +- " << r.accuracy.ci95;
  std::cout << "  (" << r.loss.n << " tasks)\n";
}

int run_train(const std::string& path, const Overrides& o, std::size_t threads, bool quiet,
              const std::optional<std::string>& resume) {
  RunConfig c = load_run_config(path);
  o.apply(c);
  if (threads) c.threads = threads;
  TrainOptions opts;
  opts.verbose = !quiet;
  opts.resume = resume;
  const TrainResult r = meta_train(c, opts);
  std::cout << "best validation at iteration " << r.best_iteration << " (" << r.best_val << ")\n";
  print_summary("test", r.test);
  std::cout << "wrote " << c.out_dir << "/metrics.csv and " << c.out_dir << "/best.ckpt\n";
  return 0;
}

int run_eval(const std::string& ckpt, std::size_t tasks, const Overrides& o) {
  LoadedModel m = load_model(ckpt);
  o.apply(m.config);
  const TaskSampler sampler(m.config);
  Rng rng = stream_rng(m.config.seed, 3);
  const EvalResult r = evaluate(*m.learner, sampler.sample_many(Split::Test, tasks, rng), m.config.threads);
  print_summary("test", r);
  if (o.out) {
    MetricsLog log;
    log.add({0, "test", "loss", r.loss.mean, r.loss.ci95, 0.0});
    if (r.accuracy.n) log.add({0, "test", "accuracy", r.accuracy.mean, r.accuracy.ci95, 0.0});
    for (double l : r.task_loss) log.add({0, "test_task", "loss", l, 0.0, 0.0});
    for (double a : r.task_accuracy) log.add({0, "test_task", "accuracy", a, 0.0, 0.0});
    log.write_csv(*o.out + "/eval.csv");
    std::cout << "wrote " << *o.out << "/eval.csv\n";
  }
  return 0;
}

int run_analyze(const std::string& ckpt, std::size_t tasks, double lr, std::optional<std::size_t> steps,
                const Overrides& o) {
  LoadedModel m = load_model(ckpt);
  o.apply(m.config);
  const auto* op = dynamic_cast<const OpLstmLearner*>(m.learner.get());
  if (!op) throw ConfigError("analyze-updates needs an op_lstm checkpoint");
  const TaskSampler sampler(m.config);
  Rng rng = stream_rng(m.config.seed, 2);
  const DirectionSummary s = update_direction_analysis(op->model(), sampler.sample_many(Split::Val, tasks, rng), lr, steps);
  std::cout << "cosine(OP, GD) " << s.mean.cos_op_gd << "  euclid(OP, GD) " << s.mean.euclid_op_gd << '\n';
  if (s.mean.cos_op_proto) {
    std::cout << "cosine(OP, Proto) " << *s.mean.cos_op_proto << "  euclid(OP, Proto) " << *s.mean.euclid_op_proto
              << '\n';
  }
  if (o.out) {
    MetricsLog log;
    log.add({0, "analysis", "cos_op_gd", s.mean.cos_op_gd, 0.0, 0.0});
    log.add({0, "analysis", "euclid_op_gd", s.mean.euclid_op_gd, 0.0, 0.0});
    if (s.mean.cos_op_proto) {
      log.add({0, "analysis", "cos_op_proto", *s.mean.cos_op_proto, 0.0, 0.0});
      log.add({0, "analysis", "euclid_op_proto", *s.mean.euclid_op_proto, 0.0, 0.0});
    }
    log.write_csv(*o.out + "/updates.csv");
    std::cout << "wrote " << *o.out << "/updates.csv\n";
  }
  return 0;
}

int run_sweep(const std::string& grid, const Overrides& o, bool quiet) {
  std::ifstream in(grid);
  if (!in) throw IoError("cannot read grid " + grid);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (o.out) text += "\nout_dir = " + *o.out + "\n";
  for (auto& [label, c] : expand_grid(text)) {
    if (o.seed) c.seed = *o.seed;
    std::cout << "== " << label << '\n';
    TrainOptions opts;
    opts.verbose = !quiet;
    const TrainResult r = meta_train(c, opts);
    print_summary("  test", r.test);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learning with plain LSTMs, OP-LSTM, MAML and prototypical networks"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, grid_path;
  std::size_t tasks = 0, threads = 0;
  std::optional<std::string> resume;
  std::optional<std::size_t> gd_steps;
  double gd_lr = 0.01;
  bool quiet = false;
  Overrides train_o, eval_o, analyze_o, sweep_o;

  auto* train = app.add_subcommand("train", "Meta-train a learner from a config file");
  train->add_option("--config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--threads", threads, "Tasks evaluated concurrently within a meta-batch");
  train->add_option("--resume", resume, "Continue from a latest.ckpt of the same config");
  train->add_flag("--quiet", quiet, "No per-validation progress lines");
  add_overrides(train, train_o);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on fresh test tasks");
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", tasks, "Number of test tasks")->required()->check(CLI::PositiveNumber);
  add_overrides(eval, eval_o);

  auto* analyze = app.add_subcommand("analyze-updates", "Compare OP-LSTM output-layer updates with GD and prototypes");
  analyze->add_option("--checkpoint", ckpt_path, "OP-LSTM checkpoint")->required()->check(CLI::ExistingFile);
  analyze->add_option("--tasks", tasks, "Number of validation tasks")->default_val(100);
  analyze->add_option("--lr", gd_lr, "Gradient-descent learning rate")->default_val(0.01);
  analyze->add_option("--steps", gd_steps, "Gradient-descent steps (default: the model's unroll)");
  add_overrides(analyze, analyze_o);

  auto* sweep = app.add_subcommand("sweep", "Train every point of a grid file (values separated by |)");
  sweep->add_option("--grid", grid_path, "Grid file")->required()->check(CLI::ExistingFile);
  sweep->add_flag("--quiet", quiet, "No per-validation progress lines");
  add_overrides(sweep, sweep_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config_path, train_o, threads, quiet, resume);
    if (*eval) return run_eval(ckpt_path, tasks, eval_o);
    if (*analyze) return run_analyze(ckpt_path, tasks, gd_lr, gd_steps, analyze_o);
    if (*sweep) return run_sweep(grid_path, sweep_o, quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
