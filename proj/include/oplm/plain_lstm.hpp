#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oplm/cells.hpp"
#include "oplm/tasks.hpp"

namespace oplm {

/// What each ingested row carries besides (x, y).
enum class InputFormat { XY, XY_PREVPRED, XY_PREVERR, XY_PREVPRED_PREVERR };
enum class Ingestion { Sequential, Batched };

std::string to_string(InputFormat f);
InputFormat parse_input_format(const std::string& s);
std::string to_string(Ingestion i);
Ingestion parse_ingestion(const std::string& s);

struct PlainLstmConfig {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::vector<std::size_t> hidden{40, 40};
  InputFormat format = InputFormat::XY_PREVPRED;
  Ingestion ingestion = Ingestion::Batched;
  std::size_t unroll = 1;  // passes over the support set (batched only)
  TaskKind kind = TaskKind::Regression;

  void validate() const;
};

/// An LSTM stack whose recurrent state ingests the support set with frozen
/// weights, followed by a linear readout. Learning happens only in the state
/// dynamics; the weights change only in the outer loop.
///
/// Ingested rows are laid out as [x, y, prev_pred?, prev_err?]. The auxiliary
/// slots hold the readout of the previously produced hidden state: the
/// previous example's output in sequential mode, and the same example's output
/// from the previous pass in batched mode (zeros before any output exists).
/// Queries are fed as [x, 0, 0...] from the ingested state, which is never
/// advanced by a query.
class PlainLstmModel {
 public:
  struct Bound {
    std::vector<LstmVars> stack;
    Var readout_w;  // [output x top_hidden]
    Var readout_b;  // [output]
  };
  using State = std::vector<LstmStateVars>;

  PlainLstmModel(PlainLstmConfig config, Rng& rng);
  /// All weights zero; useful for checks with a known answer.
  static PlainLstmModel zeros(PlainLstmConfig config);

  const PlainLstmConfig& config() const { return config_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  std::size_t row_width() const;

  Bound bind(Tape& tape, bool trainable) const;

  State ingest_sequential(const Bound& b, Tape& tape, const Examples& support,
                          const std::vector<std::size_t>& order) const;
  State ingest_batched(const Bound& b, Tape& tape, const Examples& support) const;
  /// Dispatches on the configured ingestion mode (identity order when sequential).
  State ingest(const Bound& b, Tape& tape, const Examples& support) const;

  /// Raw readout for each query row (pre-softmax for classification).
  Var query_logits(const Bound& b, Tape& tape, const State& state, const Tensor& queries) const;
  /// Regression values or class probabilities.
  Var predict_query(const Bound& b, Tape& tape, const State& state, const Tensor& queries) const;

  /// Ingest the support set, then MSE (regression) or cross-entropy on the queries.
  Var meta_loss(const Bound& b, Tape& tape, const Task& task) const;

  // Value-level conveniences (no gradients recorded).
  std::vector<LstmState> ingest_sequential(const Examples& support,
                                           const std::vector<std::size_t>& order) const;
  std::vector<LstmState> ingest_batched(const Examples& support) const;
  Tensor predict_query(const std::vector<LstmState>& state, const Tensor& queries) const;

 private:
  explicit PlainLstmModel(PlainLstmConfig config);

  Var readout(const Bound& b, Var h) const;
  Var output_of(const Bound& b, Var h) const;
  Var format_rows(Tape& tape, const Tensor& inputs, const Tensor& targets, Var prev_output,
                  Var prev_target) const;

  PlainLstmConfig config_;
  Parameters params_;
  std::vector<std::size_t> layer_first_;
  std::size_t readout_first_ = 0;
};

}  // namespace oplm
