#include "oplm/cells.hpp"

#include <cmath>

namespace oplm {

LstmParams LstmParams::zeros(std::size_t input, std::size_t hidden) {
  const Shape w{hidden, hidden + input};
  const Shape b{hidden};
  return LstmParams{Tensor(w), Tensor(w), Tensor(w), Tensor(w),
                    Tensor(b), Tensor(b), Tensor(b), Tensor(b)};
}

LstmParams LstmParams::random(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams p = zeros(input, hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden + input));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Tensor* t : {&p.w_forget, &p.w_input, &p.w_output, &p.w_cell, &p.b_input, &p.b_output,
                    &p.b_cell}) {
    for (auto& v : t->data()) v = u(rng);
  }
  for (auto& v : p.b_forget.data()) v = 1.0;
  return p;
}

void LstmParams::validate() const {
  if (w_forget.rank() != 2) throw ShapeError("LstmParams: weights must be matrices");
  const std::size_t h = b_forget.size();
  for (const Tensor* w : {&w_forget, &w_input, &w_output, &w_cell}) {
    if (w->shape() != w_forget.shape()) throw ShapeError("LstmParams: weight shapes differ");
  }
  for (const Tensor* b : {&b_forget, &b_input, &b_output, &b_cell}) {
    if (b->size() != h) throw ShapeError("LstmParams: bias lengths differ");
  }
  if (w_forget.rows() != h || w_forget.cols() < h) {
    throw ShapeError("LstmParams: weights must be [hidden x (hidden + input)]");
  }
}

LstmVars bind_lstm(Tape& tape, const LstmParams& p, bool trainable) {
  p.validate();
  auto put = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  return LstmVars{put(p.w_forget), put(p.w_input), put(p.w_output), put(p.w_cell),
                  put(p.b_forget), put(p.b_input), put(p.b_output), put(p.b_cell)};
}

std::size_t register_lstm(Parameters& params, const std::string& prefix, const LstmParams& lstm) {
  lstm.validate();
  const std::size_t first = params.add(prefix + ".w_forget", lstm.w_forget);
  params.add(prefix + ".w_input", lstm.w_input);
  params.add(prefix + ".w_output", lstm.w_output);
  params.add(prefix + ".w_cell", lstm.w_cell);
  params.add(prefix + ".b_forget", lstm.b_forget);
  params.add(prefix + ".b_input", lstm.b_input);
  params.add(prefix + ".b_output", lstm.b_output);
  params.add(prefix + ".b_cell", lstm.b_cell);
  return first;
}

LstmVars lstm_vars_at(const std::vector<Var>& bound, std::size_t first) {
  return LstmVars{bound[first],     bound[first + 1], bound[first + 2], bound[first + 3],
                  bound[first + 4], bound[first + 5], bound[first + 6], bound[first + 7]};
}

LstmParams lstm_params_at(const Parameters& params, std::size_t first) {
  return LstmParams{params[first],     params[first + 1], params[first + 2], params[first + 3],
                    params[first + 4], params[first + 5], params[first + 6], params[first + 7]};
}

LstmStateVars zero_state(Tape& tape, std::size_t rows, std::size_t hidden) {
  return LstmStateVars{tape.constant(Tensor::zeros(rows, hidden)),
                       tape.constant(Tensor::zeros(rows, hidden))};
}

LstmStepVars lstm_cell_step(const LstmVars& p, Var x, const LstmStateVars& prev) {
  const std::size_t hidden = p.hidden();
  if (x.value().rank() != 2 || prev.h.value().rank() != 2) {
    throw ShapeError("lstm_cell_step: inputs and states must be [rows x width]");
  }
  if (x.value().cols() != p.input() || prev.h.value().cols() != hidden ||
      prev.c.value().shape() != prev.h.value().shape() ||
      x.value().rows() != prev.h.value().rows()) {
    throw ShapeError("lstm_cell_step: expected x [rows x " + std::to_string(p.input()) +
                     "] and state [rows x " + std::to_string(hidden) + "], got " +
                     shape_string(x.value().shape()) + " and " + shape_string(prev.h.value().shape()));
  }
  const Var joined = concat_cols({prev.h, x});
  GateVars g;
  g.forget = sigmoid(add_row(matmul_bt(joined, p.w_forget), p.b_forget));
  g.input = sigmoid(add_row(matmul_bt(joined, p.w_input), p.b_input));
  g.output = sigmoid(add_row(matmul_bt(joined, p.w_output), p.b_output));
  g.candidate = tanh(add_row(matmul_bt(joined, p.w_cell), p.b_cell));
  const Var c = add(mul(g.forget, prev.c), mul(g.input, g.candidate));
  const Var h = mul(g.output, tanh(c));
  return LstmStepVars{LstmStateVars{h, c}, g};
}

std::pair<Var, std::vector<LstmStateVars>> stacked_lstm_step(const std::vector<LstmVars>& layers,
                                                             Var x,
                                                             const std::vector<LstmStateVars>& states) {
  if (layers.empty()) throw ShapeError("stacked_lstm_step: empty stack");
  if (states.size() != layers.size()) {
    throw ShapeError("stacked_lstm_step: one state per layer required");
  }
  std::vector<LstmStateVars> next;
  next.reserve(layers.size());
  Var input = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LstmStepVars step = lstm_cell_step(layers[l], input, states[l]);
    next.push_back(step.state);
    input = step.state.h;
  }
  return {input, std::move(next)};
}

namespace {

Tensor as_row(const Tensor& v) { return v.reshaped({1, v.size()}); }
Tensor as_vector(const Tensor& m) { return m.reshaped({m.size()}); }

}  // namespace

std::pair<LstmState, GateActivations> lstm_cell_step(const LstmParams& params, const Tensor& x,
                                                     const LstmState& prev) {
  if (prev.h.size() != prev.c.size()) throw ShapeError("lstm_cell_step: h and c lengths differ");
  Tape tape;
  const LstmVars p = bind_lstm(tape, params, false);
  const LstmStateVars s{tape.constant(as_row(prev.h)), tape.constant(as_row(prev.c))};
  const LstmStepVars out = lstm_cell_step(p, tape.constant(as_row(x)), s);
  return {LstmState{as_vector(out.state.h.value()), as_vector(out.state.c.value())},
          GateActivations{as_vector(out.gates.forget.value()), as_vector(out.gates.input.value()),
                          as_vector(out.gates.output.value()),
                          as_vector(out.gates.candidate.value())}};
}

std::pair<Tensor, std::vector<LstmState>> stacked_lstm_step(const std::vector<LstmParams>& layers,
                                                            const Tensor& x,
                                                            const std::vector<LstmState>& states) {
  if (states.size() != layers.size()) {
    throw ShapeError("stacked_lstm_step: one state per layer required");
  }
  Tape tape;
  std::vector<LstmVars> vars;
  std::vector<LstmStateVars> svars;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    vars.push_back(bind_lstm(tape, layers[l], false));
    svars.push_back({tape.constant(as_row(states[l].h)), tape.constant(as_row(states[l].c))});
  }
  auto [top, next] = stacked_lstm_step(vars, tape.constant(as_row(x)), svars);
  std::vector<LstmState> out;
  for (const auto& s : next) out.push_back({as_vector(s.h.value()), as_vector(s.c.value())});
  return {as_vector(top.value()), std::move(out)};
}

std::vector<LstmState> coordwise_step(const LstmParams& params, const std::vector<Tensor>& z,
                                      const std::vector<LstmState>& states) {
  params.validate();
  const std::size_t nodes = z.size();
  if (states.size() != nodes) throw ShapeError("coordwise_step: one state per node required");
  if (nodes == 0) return {};
  const std::size_t width = params.input();
  const std::size_t hidden = params.hidden();
  Tensor zm({nodes, width}), hm({nodes, hidden}), cm({nodes, hidden});
  for (std::size_t j = 0; j < nodes; ++j) {
    if (z[j].size() != width) {
      throw ShapeError("coordwise_step: ragged z row " + std::to_string(j) + " (length " +
                       std::to_string(z[j].size()) + ", expected " + std::to_string(width) + ")");
    }
    if (states[j].h.size() != hidden || states[j].c.size() != hidden) {
      throw ShapeError("coordwise_step: node state width mismatch");
    }
    for (std::size_t k = 0; k < width; ++k) zm(j, k) = z[j][k];
    for (std::size_t k = 0; k < hidden; ++k) {
      hm(j, k) = states[j].h[k];
      cm(j, k) = states[j].c[k];
    }
  }
  Tape tape;
  const LstmVars p = bind_lstm(tape, params, false);
  const LstmStepVars step =
      lstm_cell_step(p, tape.constant(std::move(zm)), {tape.constant(std::move(hm)), tape.constant(std::move(cm))});
  std::vector<LstmState> out(nodes);
  const Tensor& h = step.state.h.value();
  const Tensor& c = step.state.c.value();
  for (std::size_t j = 0; j < nodes; ++j) {
    out[j].h = Tensor({hidden});
    out[j].c = Tensor({hidden});
    for (std::size_t k = 0; k < hidden; ++k) {
      out[j].h[k] = h(j, k);
      out[j].c[k] = c(j, k);
    }
  }
  return out;
}

}  // namespace oplm
