#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "oplm/activation.hpp"
#include "oplm/oplstm.hpp"
#include "oplm/tasks.hpp"

namespace oplm {

// ------------------------------------------------------------------ MLP

struct MlpConfig {
  std::vector<std::size_t> layer_dims{1, 40, 40, 1};
  std::vector<Activation> activations{Activation::Relu, Activation::Relu, Activation::Identity};

  std::size_t layers() const { return layer_dims.size() - 1; }
  void validate() const;
};

/// Weights W[l-1] of shape [d_l x d_{l-1}] and biases b[l-1] of shape [d_l].
struct MlpParams {
  std::vector<Tensor> W;
  std::vector<Tensor> b;

  /// Uniform +-1/sqrt(fan_in) weights, zero biases.
  static MlpParams random(const MlpConfig& config, Rng& rng);
  void validate() const;
};

struct MlpVars {
  std::vector<Var> W;
  std::vector<Var> b;
};

MlpVars bind_mlp(Tape& tape, const MlpParams& params, bool trainable);

/// Same affine-then-activation stack the OP-LSTM base network uses.
ActivationTrace mlp_forward(const MlpVars& net, const std::vector<Activation>& activations, Var x);

/// MSE for an identity head, mean cross-entropy for a softmax head.
Var mlp_loss(const MlpVars& net, const std::vector<Activation>& activations, Var x, Var y);

/// Loss gradients built from ordinary tape ops, so they can themselves be
/// differentiated. The ReLU derivative masks are constants. With
/// `create_graph` false the gradients are detached constants.
MlpVars mlp_loss_gradients(const MlpVars& net, const std::vector<Activation>& activations, Var x, Var y,
                           bool create_graph = true);

/// Gradient of the loss with respect to each layer's pre-activation, [rows x d_l].
std::vector<Var> mlp_pre_activation_grads(const MlpVars& net, const std::vector<Activation>& activations,
                                          const ActivationTrace& trace, Var y);

// ----------------------------------------------------------------- MAML

struct MamlOptions {
  std::size_t steps = 1;
  double inner_lr = 0.01;
  bool first_order = false;
};

/// Full-support gradient descent from `init`. Every step stays on the tape,
/// so the outer gradient is exact second order unless `first_order`.
MlpVars maml_adapt(const MlpVars& init, const std::vector<Activation>& activations, Tape& tape,
                   const Examples& support, const MamlOptions& options);
MlpParams maml_adapt(const MlpParams& init, const std::vector<Activation>& activations,
                     const Examples& support, const MamlOptions& options);

/// Query loss after adaptation; steps = 0 gives the plain query loss of init.
Var maml_meta_loss(const MlpVars& init, const std::vector<Activation>& activations, Tape& tape,
                   const Task& task, const MamlOptions& options);

// ------------------------------------------------------------- ProtoNet

struct PrototypeSet {
  Tensor prototypes;  // [N x D]

  std::size_t classes() const { return prototypes.rows(); }
  std::size_t dim() const { return prototypes.cols(); }
};

/// Per-class mean of embeddings [n x D] given one-hot labels [n x N].
PrototypeSet proto_prototypes(const Tensor& embeddings, const Tensor& onehot);

/// Class probabilities softmax(-||e - c_n||^2) for each embedding row.
Tensor proto_predict(const PrototypeSet& protos, const Tensor& embeddings);

/// Linear head (W, b) with W_n = 2 c_n and b_n = -||c_n||^2, whose softmax
/// equals proto_predict.
std::pair<Tensor, Tensor> proto_as_linear(const PrototypeSet& protos);

/// Tape versions. Prototypes from embeddings [n x D] and a constant one-hot
/// matrix; logits are negative squared distances [q x N].
Var proto_prototypes(Var embeddings, const Tensor& onehot);
Var proto_logits(Var prototypes, Var query_embeddings);

}  // namespace oplm
