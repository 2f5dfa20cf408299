#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "oplm/ops.hpp"
#include "oplm/parameters.hpp"

namespace oplm {

/// Weights of one LSTM layer. Every weight matrix is [hidden x (hidden + input)]
/// and multiplies the concatenation [h_prev, x].
struct LstmParams {
  Tensor w_forget, w_input, w_output, w_cell;
  Tensor b_forget, b_input, b_output, b_cell;

  std::size_t hidden() const { return b_forget.size(); }
  std::size_t input() const { return w_forget.cols() - hidden(); }

  static LstmParams zeros(std::size_t input, std::size_t hidden);

  /// Uniform in +-1/sqrt(fan_in) with the forget bias set to +1.
  static LstmParams random(std::size_t input, std::size_t hidden, std::mt19937_64& rng);

  /// Throws ShapeError unless the eight blocks agree.
  void validate() const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

struct GateActivations {
  Tensor forget, input, output, candidate;
};

// Tape-side counterparts. Rows index independent cells evaluated with shared
// weights (batch elements, or nodes for the coordinate-wise use).

struct LstmVars {
  Var w_forget, w_input, w_output, w_cell;
  Var b_forget, b_input, b_output, b_cell;

  std::size_t hidden() const { return b_forget.value().size(); }
  std::size_t input() const { return w_forget.value().cols() - hidden(); }
};

struct LstmStateVars {
  Var h;  // [rows x hidden]
  Var c;  // [rows x hidden]
};

struct GateVars {
  Var forget, input, output, candidate;
};

struct LstmStepVars {
  LstmStateVars state;
  GateVars gates;
};

LstmVars bind_lstm(Tape& tape, const LstmParams& params, bool trainable);

/// Appends the eight blocks under `prefix` and returns the index of the first.
std::size_t register_lstm(Parameters& params, const std::string& prefix, const LstmParams& lstm);

/// Rebuilds the tape handles of a layer stored at `first` in a bound parameter list.
LstmVars lstm_vars_at(const std::vector<Var>& bound, std::size_t first);
LstmParams lstm_params_at(const Parameters& params, std::size_t first);

LstmStateVars zero_state(Tape& tape, std::size_t rows, std::size_t hidden);

/// One LSTM step on every row of x.
LstmStepVars lstm_cell_step(const LstmVars& params, Var x, const LstmStateVars& prev);

/// Feeds x through the stack bottom-up; returns the top hidden state and all new states.
std::pair<Var, std::vector<LstmStateVars>> stacked_lstm_step(const std::vector<LstmVars>& layers,
                                                             Var x,
                                                             const std::vector<LstmStateVars>& states);

// Value-level API (single cell, rank-1 vectors).

std::pair<LstmState, GateActivations> lstm_cell_step(const LstmParams& params, const Tensor& x,
                                                     const LstmState& prev);

std::pair<Tensor, std::vector<LstmState>> stacked_lstm_step(const std::vector<LstmParams>& layers,
                                                            const Tensor& x,
                                                            const std::vector<LstmState>& states);

/// Applies the same layer to every node independently: node j gets input z[j]
/// and state states[j]. Throws ShapeError on ragged z rows.
std::vector<LstmState> coordwise_step(const LstmParams& params, const std::vector<Tensor>& z,
                                      const std::vector<LstmState>& states);

}  // namespace oplm
