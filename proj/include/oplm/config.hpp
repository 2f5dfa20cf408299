#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oplm/oplstm.hpp"
#include "oplm/plain_lstm.hpp"

namespace oplm {

enum class LearnerKind { PlainLstm, OpLstm, Maml, ProtoNet };
enum class TaskSource { Sine, Synthetic, Images };

std::string to_string(LearnerKind k);
std::string to_string(TaskSource s);
LearnerKind parse_learner_kind(const std::string& s);
TaskSource parse_task_source(const std::string& s);

/// Everything a run needs. Text form is flat `key = value` lines, lists
/// comma-separated, `#` starts a comment.
struct RunConfig {
  LearnerKind learner = LearnerKind::OpLstm;

  TaskSource task = TaskSource::Sine;
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t q_query = 50;  // per task for sine, per class otherwise
  std::size_t synthetic_dim = 16;
  double synthetic_spread = 0.1;
  std::string image_root;
  double train_fraction = 0.6;  // of classes; the rest splits into val and test
  double val_fraction = 0.2;

  std::size_t meta_batch = 4;
  std::size_t meta_iterations = 20000;
  std::size_t val_every = 1000;
  std::size_t val_tasks = 500;
  std::size_t test_tasks = 2000;
  double outer_lr = 1e-3;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  std::size_t threads = 1;

  // Plain LSTM.
  std::vector<std::size_t> lstm_hidden{40, 40};
  // Unset ("auto") means XY for classification and XY_PREVPRED for regression.
  std::optional<InputFormat> input_format;
  Ingestion ingestion = Ingestion::Batched;
  std::size_t lstm_unroll = 1;

  // Base network hidden layers (OP-LSTM, MAML, ProtoNet embedding).
  std::vector<std::size_t> hidden{40, 40};

  // OP-LSTM.
  std::vector<std::size_t> coord_widths{20, 1};
  std::size_t unroll = 1;
  double gamma = 1.0;
  bool learn_gamma = true;
  HiddenUpdateOrder update_order = HiddenUpdateOrder::Pooled;

  // MAML.
  std::size_t inner_steps = 1;
  double inner_lr = 0.01;
  bool first_order = false;

  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Applies one `key = value` assignment; throws ConfigError on unknown keys.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Canonical text listing every key in a fixed order.
std::string to_text(const RunConfig& config);

/// FNV-1a over the keys that determine parameter shapes and model semantics.
std::uint64_t config_hash(const RunConfig& config);

/// A sweep file is a config whose values may list alternatives separated by
/// `|`. Returns one (label, config) per point of the cartesian product, with
/// each run writing under `<out_dir>/<label>`.
std::vector<std::pair<std::string, RunConfig>> expand_grid(const std::string& text);

}  // namespace oplm
