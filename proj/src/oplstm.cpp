#include "oplm/oplstm.hpp"

#include <algorithm>
#include <cmath>

namespace oplm {

std::string to_string(HiddenUpdateOrder o) { return o == HiddenUpdateOrder::Pooled ? "pooled" : "per_example"; }

HiddenUpdateOrder parse_hidden_update_order(const std::string& s) {
  if (s == "pooled") return HiddenUpdateOrder::Pooled;
  if (s == "per_example") return HiddenUpdateOrder::PerExample;
  throw ConfigError("unknown hidden update order: " + s);
}

std::vector<Activation> OpLstmConfig::groups() const {
  std::vector<Activation> out;
  for (auto a : activations) {
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  return out;
}

void OpLstmConfig::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("OP-LSTM needs at least one layer");
  for (auto d : layer_dims) {
    if (d == 0) throw ConfigError("OP-LSTM layer sizes must be positive");
  }
  if (activations.size() != layers()) {
    throw ConfigError("OP-LSTM: " + std::to_string(activations.size()) + " activations for " +
                      std::to_string(layers()) + " layers");
  }
  if (coord_widths.empty() || coord_widths.back() != 1) {
    throw ConfigError("OP-LSTM: coordinate-wise LSTM must end in width 1");
  }
  for (auto w : coord_widths) {
    if (w == 0) throw ConfigError("OP-LSTM: coordinate-wise widths must be positive");
  }
  if (unroll == 0) throw ConfigError("OP-LSTM unroll must be >= 1");
}

// ------------------------------------------------------------ building blocks

ActivationTrace oplstm_forward(const std::vector<Var>& H, const std::vector<Var>& b,
                               const std::vector<Activation>& activations, Var x) {
  if (H.size() != b.size() || H.size() != activations.size()) {
    throw ShapeError("oplstm_forward: layer lists disagree");
  }
  ActivationTrace trace;
  trace.a.push_back(x);
  for (std::size_t l = 0; l < H.size(); ++l) {
    const Tensor& Hv = H[l].value();
    if (trace.a.back().value().cols() != Hv.cols()) {
      throw ShapeError("oplstm_forward: layer " + std::to_string(l + 1) + " expects width " +
                       std::to_string(Hv.cols()) + ", got " + shape_string(trace.a.back().shape()));
    }
    const Var pre = add_row(matmul_bt(trace.a.back(), H[l]), b[l]);
    trace.pre.push_back(pre);
    trace.a.push_back(apply_activation(pre, activations[l]));
  }
  return trace;
}

Var message_input(Var activations, Var signal) {
  require_same_shape(activations.value(), signal.value(), "message_input");
  const std::size_t n = activations.value().size();
  return concat_cols({reshape(activations, {n, 1}), reshape(signal, {n, 1})});
}

Var backward_message(Var h_above, Var H_above) { return matmul(h_above, H_above); }

NodeUpdate node_state_update(const std::vector<LstmVars>& group, Var z,
                             const std::vector<LstmStateVars>& node_states, std::size_t examples) {
  if (group.empty()) throw ContractError("node_state_update: empty coordinate-wise stack");
  if (group.size() != node_states.size()) throw ShapeError("node_state_update: state depth mismatch");
  const std::size_t d = node_states.front().h.value().rows();
  if (z.value().rows() != examples * d || z.value().cols() != 2) {
    throw ShapeError("node_state_update: expected z of shape [" + std::to_string(examples * d) +
                     " x 2], got " + shape_string(z.shape()));
  }
  std::vector<LstmStateVars> shared;
  for (const auto& s : node_states) shared.push_back({repeat_rows(s.h, examples), repeat_rows(s.c, examples)});
  auto [top, next] = stacked_lstm_step(group, z, shared);
  return {std::move(next), reshape(top, {examples, d})};
}

std::vector<LstmStateVars> pool_node_states(const std::vector<LstmStateVars>& per_example,
                                            std::size_t examples) {
  std::vector<LstmStateVars> out;
  for (const auto& s : per_example) out.push_back({mean_groups(s.h, examples), mean_groups(s.c, examples)});
  return out;
}

Var hidden_matrix_update(Var H, Var h_rows, Var a_prev_rows, Var gamma, std::optional<std::size_t> count) {
  const Tensor& Hv = H.value();
  const std::size_t m = h_rows.value().rows();
  if (a_prev_rows.value().rows() != m || h_rows.value().cols() != Hv.rows() ||
      a_prev_rows.value().cols() != Hv.cols()) {
    throw ShapeError("hidden_matrix_update: H " + shape_string(Hv.shape()) + ", h " +
                     shape_string(h_rows.shape()) + ", a " + shape_string(a_prev_rows.shape()));
  }
  const std::size_t n = count.value_or(m);
  if (n == 0) throw ContractError("hidden_matrix_update: zero example count");
  // ||h a^T||_F = ||h|| ||a||
  const Var norms = add_scalar(mul(row_norms(h_rows), row_norms(a_prev_rows)), kOuterNormGuard);
  const Var delta = matmul_at(scale_rows(h_rows, reciprocal(norms)), a_prev_rows);
  return add(H, scale(scale(delta, gamma), 1.0 / static_cast<double>(n)));
}

// ------------------------------------------------------------------- model

OpLstmModel::OpLstmModel(OpLstmConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const auto& dims = config_.layer_dims;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    Tensor H({dims[l], dims[l - 1]});
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l - 1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : H.data()) v = u(rng);
    const std::size_t i = params_.add("H0." + std::to_string(l), std::move(H));
    if (l == 1) h0_first_ = i;
    params_.add("b." + std::to_string(l), Tensor({dims[l]}));
  }
  gamma_index_ = params_.add("gamma", Tensor::scalar(config_.gamma_init));
  for (auto act : config_.groups()) {
    std::size_t in = 2;
    auto& firsts = group_first_[act];
    for (std::size_t k = 0; k < config_.coord_widths.size(); ++k) {
      const std::size_t w = config_.coord_widths[k];
      firsts.push_back(register_lstm(params_, "lstm." + to_string(act) + "." + std::to_string(k),
                                     LstmParams::random(in, w, rng)));
      in = w;
    }
  }
}

void OpLstmModel::zero_group(Activation group) {
  const auto it = group_first_.find(group);
  if (it == group_first_.end()) throw ContractError("zero_group: no group " + to_string(group));
  for (auto first : it->second) {
    for (std::size_t i = first; i < first + 8; ++i) params_[i] = Tensor::zeros_like(params_[i]);
  }
}

OpLstmBound OpLstmModel::bind(Tape& tape, bool trainable) const {
  std::vector<bool> frozen(params_.size(), false);
  frozen[gamma_index_] = !config_.learn_gamma;
  const std::vector<Var> all = params_.bind(tape, trainable, frozen);
  OpLstmBound b;
  for (std::size_t l = 1; l <= config_.layers(); ++l) {
    b.H0.push_back(all[H0_index(l)]);
    b.b.push_back(all[bias_index(l)]);
  }
  b.gamma = all[gamma_index_];
  for (const auto& [act, firsts] : group_first_) {
    auto& stack = b.groups[act];
    for (auto f : firsts) stack.push_back(lstm_vars_at(all, f));
  }
  return b;
}

OpLstmState OpLstmModel::initial_state(const OpLstmBound& bound, Tape& tape) const {
  OpLstmState s{bound.H0, bound.b, {}};
  for (std::size_t l = 1; l <= config_.layers(); ++l) {
    std::vector<LstmStateVars> layer;
    for (auto w : config_.coord_widths) layer.push_back(zero_state(tape, config_.layer_dims[l], w));
    s.node_states.push_back(std::move(layer));
  }
  return s;
}

ActivationTrace OpLstmModel::forward(const OpLstmState& state, Var x) const {
  return oplstm_forward(state.H, state.b, config_.activations, x);
}

namespace {

const std::vector<LstmVars>& group_for(const OpLstmBound& bound, Activation act) {
  const auto it = bound.groups.find(act);
  if (it == bound.groups.end()) throw ContractError("OP-LSTM: no coordinate-wise LSTM for " + to_string(act));
  return it->second;
}

}  // namespace

// Node updates for all layers from a forward trace, top-down. Messages use the
// matrices the trace was computed with. Returns per-layer hidden rows and the
// per-example node states (empty where a rule replaced the LSTM).
struct LayerUpdates {
  std::vector<Var> h;
  std::vector<std::vector<LstmStateVars>> per_example;
};

static LayerUpdates node_updates(const OpLstmConfig& config, const OpLstmBound& bound, Tape& tape,
                                 const OpLstmState& state, const ActivationTrace& trace, Var targets,
                                 std::size_t examples, const AdaptOptions& options) {
  const std::size_t L = config.layers();
  LayerUpdates out{std::vector<Var>(L), std::vector<std::vector<LstmStateVars>>(L)};
  for (std::size_t l = L; l >= 1; --l) {
    const Activation act = config.activations[l - 1];
    const Var a = trace.a[l];
    const Var signal = l == L ? targets : backward_message(out.h[l], state.H[l]);
    const auto rule = options.rules.find(act);
    if (rule != options.rules.end()) {
      out.h[l - 1] = rule->second(tape, {l, act, a, signal});
      if (out.h[l - 1].value().rows() != examples || out.h[l - 1].value().cols() != a.value().cols()) {
        throw ShapeError("node rule for layer " + std::to_string(l) + " returned " +
                         shape_string(out.h[l - 1].shape()));
      }
    } else {
      NodeUpdate upd = node_state_update(group_for(bound, act), message_input(a, signal),
                                         state.node_states[l - 1], examples);
      out.h[l - 1] = upd.h;
      out.per_example[l - 1] = std::move(upd.per_example);
    }
  }
  return out;
}

void OpLstmModel::one_pass(const OpLstmBound& bound, Tape& tape, OpLstmState& state, const Examples& support,
                           Var inputs, Var targets, const AdaptOptions& options) const {
  const std::size_t m = support.size();
  const ActivationTrace trace = forward(state, inputs);
  LayerUpdates upd = node_updates(config_, bound, tape, state, trace, targets, m, options);
  for (std::size_t l = 0; l < config_.layers(); ++l) {
    state.H[l] = hidden_matrix_update(state.H[l], upd.h[l], trace.a[l], bound.gamma);
    if (!upd.per_example[l].empty()) state.node_states[l] = pool_node_states(upd.per_example[l], m);
  }
}

void OpLstmModel::one_pass_per_example(const OpLstmBound& bound, Tape& tape, OpLstmState& state,
                                       const Examples& support, const AdaptOptions& options) const {
  const std::size_t m = support.size();
  const std::size_t L = config_.layers();
  const std::size_t din = support.input_dim(), dout = support.output_dim();
  // Every example starts from the node states pooled at the end of the previous pass.
  const std::vector<std::vector<LstmStateVars>> pass_start = state.node_states;
  std::vector<std::vector<std::vector<LstmStateVars>>> collected(L);
  for (std::size_t i = 0; i < m; ++i) {
    Tensor x({1, din}), y({1, dout});
    std::copy_n(support.inputs.data().begin() + i * din, din, x.data().begin());
    std::copy_n(support.targets.data().begin() + i * dout, dout, y.data().begin());
    OpLstmState view = state;
    view.node_states = pass_start;
    const ActivationTrace trace = forward(view, tape.constant(std::move(x)));
    LayerUpdates upd = node_updates(config_, bound, tape, view, trace, tape.constant(std::move(y)), 1, options);
    for (std::size_t l = 0; l < L; ++l) {
      state.H[l] = hidden_matrix_update(state.H[l], upd.h[l], trace.a[l], bound.gamma, m);
      if (!upd.per_example[l].empty()) collected[l].push_back(std::move(upd.per_example[l]));
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    if (collected[l].empty()) continue;
    std::vector<LstmStateVars> pooled;
    for (std::size_t k = 0; k < config_.coord_widths.size(); ++k) {
      std::vector<Var> hs, cs;
      for (const auto& ex : collected[l]) {
        hs.push_back(ex[k].h);
        cs.push_back(ex[k].c);
      }
      pooled.push_back({mean_groups(concat_rows(hs), m), mean_groups(concat_rows(cs), m)});
    }
    state.node_states[l] = std::move(pooled);
  }
}

OpLstmState OpLstmModel::adapt(const OpLstmBound& bound, Tape& tape, const Examples& support,
                               const AdaptOptions& options) const {
  if (support.size() == 0) throw ContractError("OP-LSTM adapt: empty support set");
  if (support.input_dim() != config_.layer_dims.front()) {
    throw ShapeError("OP-LSTM adapt: input width " + std::to_string(support.input_dim()) + " but d0 = " +
                     std::to_string(config_.layer_dims.front()));
  }
  if (support.output_dim() != config_.layer_dims.back()) {
    throw ShapeError("OP-LSTM adapt: target width " + std::to_string(support.output_dim()) +
                     " but output layer has " + std::to_string(config_.layer_dims.back()) + " nodes");
  }
  OpLstmState state = initial_state(bound, tape);
  const Var inputs = tape.constant(support.inputs);
  const Var targets = tape.constant(support.targets);
  for (std::size_t t = 0; t < config_.unroll; ++t) {
    if (config_.update_order == HiddenUpdateOrder::Pooled) {
      one_pass(bound, tape, state, support, inputs, targets, options);
    } else {
      one_pass_per_example(bound, tape, state, support, options);
    }
  }
  return state;
}

Var OpLstmModel::logits(const OpLstmState& adapted, Var x) const { return forward(adapted, x).pre.back(); }

Var OpLstmModel::predict(const OpLstmState& adapted, Var x) const { return forward(adapted, x).a.back(); }

Var OpLstmModel::meta_loss(const OpLstmBound& bound, Tape& tape, const Task& task,
                           const AdaptOptions& options) const {
  validate_task(task);
  if (task.query.size() == 0) throw ContractError("meta_loss: empty query set");
  const OpLstmState adapted = adapt(bound, tape, task.support, options);
  const Var x = tape.constant(task.query.inputs);
  const Var y = tape.constant(task.query.targets);
  if (task.meta.kind == TaskKind::Classification) {
    if (config_.activations.back() != Activation::Softmax) {
      throw ConfigError("OP-LSTM: classification needs a softmax output layer");
    }
    return softmax_cross_entropy(logits(adapted, x), y);
  }
  return mse(predict(adapted, x), y);
}

std::vector<Tensor> OpLstmModel::adapted_matrices(const Examples& support, const AdaptOptions& options) const {
  Tape tape;
  const OpLstmBound b = bind(tape, false);
  const OpLstmState s = adapt(b, tape, support, options);
  std::vector<Tensor> out;
  for (const auto& H : s.H) out.push_back(H.value());
  return out;
}

Tensor OpLstmModel::predict(const Examples& support, const Tensor& queries) const {
  Tape tape;
  const OpLstmBound b = bind(tape, false);
  const OpLstmState s = adapt(b, tape, support);
  return predict(s, tape.constant(queries)).value();
}

}  // namespace oplm
