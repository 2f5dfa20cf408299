#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oplm/activation.hpp"
#include "oplm/cells.hpp"
#include "oplm/tasks.hpp"

namespace oplm {

/// When per-example outer products are applied to the hidden matrices within
/// one pass over the support set.
enum class HiddenUpdateOrder {
  Pooled,      // accumulate against the pre-pass matrices, apply once (order invariant)
  PerExample,  // apply after every example, in support order
};

std::string to_string(HiddenUpdateOrder o);
HiddenUpdateOrder parse_hidden_update_order(const std::string& s);

struct OpLstmConfig {
  std::vector<std::size_t> layer_dims{1, 40, 40, 1};  // d0 .. dL
  std::vector<Activation> activations{Activation::Relu, Activation::Relu, Activation::Identity};
  std::vector<std::size_t> coord_widths{20, 1};  // per-node LSTM stack, last width 1
  std::size_t unroll = 1;
  double gamma_init = 1.0;
  bool learn_gamma = true;
  HiddenUpdateOrder update_order = HiddenUpdateOrder::Pooled;

  std::size_t layers() const { return layer_dims.size() - 1; }
  /// Distinct activations in first-use order; one coordinate-wise LSTM each.
  std::vector<Activation> groups() const;
  void validate() const;
};

/// Frobenius guard added to ||h a^T||_F before dividing.
inline constexpr double kOuterNormGuard = 1e-12;

/// Meta-parameters on a tape.
struct OpLstmBound {
  std::vector<Var> H0;  // H0[l-1] is [d_l x d_{l-1}]
  std::vector<Var> b;   // b[l-1] is [d_l]
  Var gamma;
  std::map<Activation, std::vector<LstmVars>> groups;
};

/// Per-task fast state: hidden matrices, fixed biases and per-node LSTM states.
struct OpLstmState {
  std::vector<Var> H;
  std::vector<Var> b;
  /// node_states[l-1][k] holds the k-th coordinate-wise layer's (h, c) for
  /// every node of base layer l, as [d_l x width_k].
  std::vector<std::vector<LstmStateVars>> node_states;
};

/// a[0] is the input batch, a[l] the post-activation of layer l; pre[l-1] the
/// matching pre-activation. Rows index examples.
struct ActivationTrace {
  std::vector<Var> a;
  std::vector<Var> pre;
};

/// Everything a node rule sees for one base layer during one pass.
struct NodeRuleInput {
  std::size_t layer = 0;  // 1-based
  Activation activation = Activation::Identity;
  Var activations;  // a^(l), [M x d_l]
  Var signal;       // targets at the head, backward message below; [M x d_l]
};

/// Replaces the coordinate-wise LSTM of an activation group with a fixed map
/// producing the per-example hidden rows [M x d_l].
using NodeRule = std::function<Var(Tape&, const NodeRuleInput&)>;

struct AdaptOptions {
  std::map<Activation, NodeRule> rules;
};

struct NodeUpdate {
  std::vector<LstmStateVars> per_example;  // [M*d x width_k], row i*d + j
  Var h;                                    // [M x d], final width-1 outputs
};

// Building blocks (each one step of the inner loop).

ActivationTrace oplstm_forward(const std::vector<Var>& H, const std::vector<Var>& b,
                               const std::vector<Activation>& activations, Var x);

/// Per-node two-component LSTM inputs [M*d x 2]: (activation, signal).
Var message_input(Var activations, Var signal);

/// Rows of h_above [M x d_{l+1}] pushed back through H_above [d_{l+1} x d_l].
Var backward_message(Var h_above, Var H_above);

/// Runs the shared coordinate-wise stack on every (example, node) pair, each
/// starting from that node's pooled state.
NodeUpdate node_state_update(const std::vector<LstmVars>& group, Var z,
                             const std::vector<LstmStateVars>& node_states, std::size_t examples);

/// Mean over examples of per-example node states.
std::vector<LstmStateVars> pool_node_states(const std::vector<LstmStateVars>& per_example,
                                            std::size_t examples);

/// H + (gamma / count) * sum_i h_i a_i^T / (||h_i a_i^T||_F + guard), where
/// count defaults to the number of rows.
Var hidden_matrix_update(Var H, Var h_rows, Var a_prev_rows, Var gamma,
                         std::optional<std::size_t> count = std::nullopt);

/// Base network whose weight matrices are 2D hidden states updated by a
/// learned, coordinate-wise LSTM rule. Biases are meta-learned but never
/// adapted within a task.
class OpLstmModel {
 public:
  OpLstmModel(OpLstmConfig config, Rng& rng);

  const OpLstmConfig& config() const { return config_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  std::size_t H0_index(std::size_t layer) const { return h0_first_ + 2 * (layer - 1); }
  std::size_t bias_index(std::size_t layer) const { return h0_first_ + 2 * (layer - 1) + 1; }
  std::size_t gamma_index() const { return gamma_index_; }
  /// Zeros every coordinate-wise LSTM weight of the given group.
  void zero_group(Activation group);

  OpLstmBound bind(Tape& tape, bool trainable) const;
  /// Initial matrices and biases with zeroed node states.
  OpLstmState initial_state(const OpLstmBound& bound, Tape& tape) const;

  ActivationTrace forward(const OpLstmState& state, Var x) const;

  /// T passes over the support set.
  OpLstmState adapt(const OpLstmBound& bound, Tape& tape, const Examples& support,
                    const AdaptOptions& options = {}) const;

  Var logits(const OpLstmState& adapted, Var x) const;
  Var predict(const OpLstmState& adapted, Var x) const;

  /// Adapt on the support set, then MSE or cross-entropy on the queries.
  Var meta_loss(const OpLstmBound& bound, Tape& tape, const Task& task,
                const AdaptOptions& options = {}) const;

  // Value-level conveniences.
  std::vector<Tensor> adapted_matrices(const Examples& support, const AdaptOptions& options = {}) const;
  Tensor predict(const Examples& support, const Tensor& queries) const;

 private:
  void one_pass(const OpLstmBound& bound, Tape& tape, OpLstmState& state, const Examples& support,
                Var inputs, Var targets, const AdaptOptions& options) const;
  void one_pass_per_example(const OpLstmBound& bound, Tape& tape, OpLstmState& state,
                            const Examples& support, const AdaptOptions& options) const;

  OpLstmConfig config_;
  Parameters params_;
  std::size_t h0_first_ = 0;
  std::size_t gamma_index_ = 0;
  std::map<Activation, std::vector<std::size_t>> group_first_;
};

}  // namespace oplm
