#include "oplm/plain_lstm.hpp"

#include <cmath>
#include <numeric>

namespace oplm {

std::string to_string(InputFormat f) {
  switch (f) {
    case InputFormat::XY: return "xy";
    case InputFormat::XY_PREVPRED: return "xy_prevpred";
    case InputFormat::XY_PREVERR: return "xy_preverr";
    case InputFormat::XY_PREVPRED_PREVERR: return "xy_prevpred_preverr";
  }
  return "?";
}

InputFormat parse_input_format(const std::string& s) {
  if (s == "xy") return InputFormat::XY;
  if (s == "xy_prevpred") return InputFormat::XY_PREVPRED;
  if (s == "xy_preverr") return InputFormat::XY_PREVERR;
  if (s == "xy_prevpred_preverr") return InputFormat::XY_PREVPRED_PREVERR;
  throw ConfigError("unknown input format: " + s);
}

std::string to_string(Ingestion i) { return i == Ingestion::Batched ? "batched" : "sequential"; }

Ingestion parse_ingestion(const std::string& s) {
  if (s == "batched") return Ingestion::Batched;
  if (s == "sequential") return Ingestion::Sequential;
  throw ConfigError("unknown ingestion mode: " + s);
}

namespace {

bool has_prev_pred(InputFormat f) {
  return f == InputFormat::XY_PREVPRED || f == InputFormat::XY_PREVPRED_PREVERR;
}
bool has_prev_err(InputFormat f) {
  return f == InputFormat::XY_PREVERR || f == InputFormat::XY_PREVPRED_PREVERR;
}

std::vector<LstmState> to_values(const PlainLstmModel::State& s) {
  std::vector<LstmState> out;
  for (const auto& layer : s) {
    out.push_back({layer.h.value().reshaped({layer.h.value().size()}),
                   layer.c.value().reshaped({layer.c.value().size()})});
  }
  return out;
}

}  // namespace

void PlainLstmConfig::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("plain LSTM needs nonzero in/out dims");
  if (hidden.empty()) throw ConfigError("plain LSTM needs at least one layer");
  for (auto h : hidden) {
    if (h == 0) throw ConfigError("plain LSTM hidden sizes must be positive");
  }
  if (unroll == 0) throw ConfigError("plain LSTM unroll must be >= 1");
}

PlainLstmModel::PlainLstmModel(PlainLstmConfig config) : config_(std::move(config)) {
  config_.validate();
}

PlainLstmModel::PlainLstmModel(PlainLstmConfig config, Rng& rng) : PlainLstmModel(std::move(config)) {
  std::size_t in = row_width();
  for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
    layer_first_.push_back(
        register_lstm(params_, "lstm." + std::to_string(l), LstmParams::random(in, config_.hidden[l], rng)));
    in = config_.hidden[l];
  }
  Tensor w({config_.output_dim, in});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : w.data()) v = u(rng);
  readout_first_ = params_.add("readout.w", std::move(w));
  params_.add("readout.b", Tensor({config_.output_dim}));
}

PlainLstmModel PlainLstmModel::zeros(PlainLstmConfig config) {
  PlainLstmModel m(std::move(config));
  std::size_t in = m.row_width();
  for (std::size_t l = 0; l < m.config_.hidden.size(); ++l) {
    m.layer_first_.push_back(register_lstm(m.params_, "lstm." + std::to_string(l),
                                           LstmParams::zeros(in, m.config_.hidden[l])));
    in = m.config_.hidden[l];
  }
  m.readout_first_ = m.params_.add("readout.w", Tensor({m.config_.output_dim, in}));
  m.params_.add("readout.b", Tensor({m.config_.output_dim}));
  return m;
}

std::size_t PlainLstmModel::row_width() const {
  std::size_t w = config_.input_dim + config_.output_dim;
  if (has_prev_pred(config_.format)) w += config_.output_dim;
  if (has_prev_err(config_.format)) w += config_.output_dim;
  return w;
}

PlainLstmModel::Bound PlainLstmModel::bind(Tape& tape, bool trainable) const {
  const std::vector<Var> all = params_.bind(tape, trainable);
  Bound b;
  for (auto first : layer_first_) b.stack.push_back(lstm_vars_at(all, first));
  b.readout_w = all[readout_first_];
  b.readout_b = all[readout_first_ + 1];
  return b;
}

Var PlainLstmModel::readout(const Bound& b, Var h) const {
  return add_row(matmul_bt(h, b.readout_w), b.readout_b);
}

Var PlainLstmModel::output_of(const Bound& b, Var h) const {
  const Var logits = readout(b, h);
  return config_.kind == TaskKind::Classification ? softmax(logits) : logits;
}

Var PlainLstmModel::format_rows(Tape& tape, const Tensor& inputs, const Tensor& targets,
                                Var prev_output, Var prev_target) const {
  if (inputs.cols() != config_.input_dim || targets.cols() != config_.output_dim) {
    throw ShapeError("plain LSTM: expected inputs of width " + std::to_string(config_.input_dim) +
                     " and targets of width " + std::to_string(config_.output_dim) + ", got " +
                     shape_string(inputs.shape()) + " and " + shape_string(targets.shape()));
  }
  const std::size_t n = inputs.rows();
  std::vector<Var> parts{tape.constant(inputs), tape.constant(targets)};
  const bool have_prev = prev_output.valid();
  const Tensor zeros({n, config_.output_dim});
  if (has_prev_pred(config_.format)) {
    parts.push_back(have_prev ? prev_output : tape.constant(zeros));
  }
  if (has_prev_err(config_.format)) {
    parts.push_back(have_prev ? sub(prev_output, prev_target) : tape.constant(zeros));
  }
  return concat_cols(parts);
}

PlainLstmModel::State PlainLstmModel::ingest_sequential(const Bound& b, Tape& tape,
                                                        const Examples& support,
                                                        const std::vector<std::size_t>& order) const {
  const std::size_t m = support.size();
  if (m == 0) throw ContractError("ingest_sequential: empty support set");
  const Examples ordered = support.permuted(order);
  State state;
  for (const auto& layer : b.stack) state.push_back(zero_state(tape, 1, layer.hidden()));
  Var prev_output, prev_target;
  const std::size_t din = config_.input_dim, dout = config_.output_dim;
  for (std::size_t t = 0; t < m; ++t) {
    Tensor x({1, din}), y({1, dout});
    std::copy_n(ordered.inputs.data().begin() + t * din, din, x.data().begin());
    std::copy_n(ordered.targets.data().begin() + t * dout, dout, y.data().begin());
    const Var row = format_rows(tape, x, y, prev_output, prev_target);
    auto [top, next] = stacked_lstm_step(b.stack, row, state);
    state = std::move(next);
    if (has_prev_pred(config_.format) || has_prev_err(config_.format)) {
      prev_output = output_of(b, top);
      prev_target = tape.constant(std::move(y));
    }
  }
  return state;
}

PlainLstmModel::State PlainLstmModel::ingest_batched(const Bound& b, Tape& tape,
                                                     const Examples& support) const {
  const std::size_t m = support.size();
  if (m == 0) throw ContractError("ingest_batched: empty support set");
  State state;
  for (const auto& layer : b.stack) state.push_back(zero_state(tape, 1, layer.hidden()));
  const bool needs_outputs = has_prev_pred(config_.format) || has_prev_err(config_.format);
  const Var targets = tape.constant(support.targets);
  Var prev_output;
  for (std::size_t pass = 0; pass < config_.unroll; ++pass) {
    const Var rows = format_rows(tape, support.inputs, support.targets, prev_output, targets);
    State shared;
    for (const auto& s : state) shared.push_back({repeat_rows(s.h, m), repeat_rows(s.c, m)});
    auto [top, per_example] = stacked_lstm_step(b.stack, rows, shared);
    state.clear();
    for (const auto& s : per_example) state.push_back({mean_groups(s.h, m), mean_groups(s.c, m)});
    if (needs_outputs && pass + 1 < config_.unroll) prev_output = output_of(b, top);
  }
  return state;
}

PlainLstmModel::State PlainLstmModel::ingest(const Bound& b, Tape& tape, const Examples& support) const {
  if (config_.ingestion == Ingestion::Batched) return ingest_batched(b, tape, support);
  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), 0);
  return ingest_sequential(b, tape, support, order);
}

Var PlainLstmModel::query_logits(const Bound& b, Tape& tape, const State& state,
                                 const Tensor& queries) const {
  if (state.size() != b.stack.size()) throw ShapeError("predict_query: state depth mismatch");
  if (queries.rank() != 2) throw ShapeError("predict_query: queries must be [n x input_dim]");
  const std::size_t q = queries.rows();
  const Var rows = format_rows(tape, queries, Tensor({q, config_.output_dim}), Var(), Var());
  State shared;
  for (const auto& s : state) {
    if (s.h.value().rows() != 1) throw ShapeError("predict_query: expected a single ingested state");
    shared.push_back({repeat_rows(s.h, q), repeat_rows(s.c, q)});
  }
  auto [top, unused] = stacked_lstm_step(b.stack, rows, shared);
  return readout(b, top);
}

Var PlainLstmModel::predict_query(const Bound& b, Tape& tape, const State& state,
                                  const Tensor& queries) const {
  const Var logits = query_logits(b, tape, state, queries);
  return config_.kind == TaskKind::Classification ? softmax(logits) : logits;
}

Var PlainLstmModel::meta_loss(const Bound& b, Tape& tape, const Task& task) const {
  validate_task(task);
  if (task.query.size() == 0) throw ContractError("meta_loss: empty query set");
  const State state = ingest(b, tape, task.support);
  const Var logits = query_logits(b, tape, state, task.query.inputs);
  const Var targets = tape.constant(task.query.targets);
  return config_.kind == TaskKind::Classification ? softmax_cross_entropy(logits, targets)
                                                  : mse(logits, targets);
}

std::vector<LstmState> PlainLstmModel::ingest_sequential(const Examples& support,
                                                         const std::vector<std::size_t>& order) const {
  Tape tape;
  return to_values(ingest_sequential(bind(tape, false), tape, support, order));
}

std::vector<LstmState> PlainLstmModel::ingest_batched(const Examples& support) const {
  Tape tape;
  return to_values(ingest_batched(bind(tape, false), tape, support));
}

Tensor PlainLstmModel::predict_query(const std::vector<LstmState>& state, const Tensor& queries) const {
  Tape tape;
  const Bound b = bind(tape, false);
  State s;
  for (const auto& layer : state) {
    s.push_back({tape.constant(layer.h.reshaped({1, layer.h.size()})),
                 tape.constant(layer.c.reshaped({1, layer.c.size()}))});
  }
  return predict_query(b, tape, s, queries).value();
}

}  // namespace oplm
