#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oplm/checkpoint.hpp"
#include "oplm/config.hpp"
#include "oplm/learners.hpp"

namespace oplm {

/// Mean and 95% half-width 1.96 * s / sqrt(n) with the sample deviation s.
/// A single value has half-width 0.
struct Summary {
  double mean = 0.0;
  double ci95 = 0.0;
  std::size_t n = 0;
};
Summary summarize(const std::vector<double>& values);

struct MetricRow {
  std::size_t iteration = 0;
  std::string split;
  std::string metric;
  double mean = 0.0;
  double ci95 = 0.0;
  double seconds = 0.0;
};

/// Rows in the order they were produced. Per-task test rows use the split
/// "test_task" with ci95 = 0, one row per task in sampling order.
class MetricsLog {
 public:
  static constexpr const char* kHeader = "iteration,split,metric,mean,ci95,seconds";

  /// Throws ContractError when a split's iteration goes backwards.
  void add(MetricRow row);
  const std::vector<MetricRow>& rows() const { return rows_; }
  std::vector<MetricRow> select(const std::string& split, const std::string& metric) const;

  std::string to_csv() const;
  static MetricsLog from_csv(const std::string& text);
  void write_csv(const std::string& path) const;

 private:
  std::vector<MetricRow> rows_;
};

enum class Split { Train, Val, Test };

/// Seeded generator for an independent stream of a run.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream);

/// Draws episodes for a run configuration. Image datasets are loaded once and
/// split by class.
class TaskSampler {
 public:
  explicit TaskSampler(const RunConfig& config);

  Task sample(Split split, Rng& rng) const;
  std::vector<Task> sample_many(Split split, std::size_t n, Rng& rng) const;
  ProblemDims dims() const;

 private:
  RunConfig config_;
  std::shared_ptr<const DatasetSplits> images_;
};

struct EvalResult {
  Summary loss;
  Summary accuracy;  // n = 0 for regression
  std::vector<double> task_loss;
  std::vector<double> task_accuracy;
};

/// No gradients; per-task metrics in task order.
EvalResult evaluate(const Learner& learner, const std::vector<Task>& tasks, std::size_t threads = 1);

/// Learner weights under "param/<name>" plus the config text and hash.
Checkpoint learner_checkpoint(const Learner& learner, const RunConfig& config);
void restore_parameters(Learner& learner, const Checkpoint& ckpt, const std::string& prefix = "param/");

/// Rebuilds config and learner from a checkpoint written by learner_checkpoint.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<Learner> learner;
};
LoadedModel load_model(const std::string& path);

struct TrainOptions {
  bool write_files = true;
  bool verbose = false;
  /// Continue from a latest.ckpt written by an earlier run of the same config.
  std::optional<std::string> resume;
  /// Stop after this iteration (a validation point), leaving latest.ckpt behind.
  std::optional<std::size_t> stop_after;
  /// Called after every validation with the current learner.
  std::function<void(std::size_t iteration, const Learner& learner, MetricsLog& log)> on_validation;
};

struct TrainResult {
  MetricsLog log;
  EvalResult test;
  std::size_t best_iteration = 0;
  double best_val = 0.0;
  bool finished = false;
  std::unique_ptr<Learner> learner;  // holds the best-validation weights when finished
};

/// Outer loop: J tasks per iteration, mean query-loss gradient, one Adam step.
/// Validates every val_every iterations on a fixed validation set, keeps the
/// best weights (lowest loss for regression, highest accuracy otherwise),
/// restores them at the end and evaluates on the test tasks. Non-finite
/// values abort with NumericError naming the iteration.
TrainResult meta_train(const RunConfig& config, const TrainOptions& options = {});

}  // namespace oplm
