#include "oplm/baselines.hpp"

#include <cmath>

namespace oplm {

void MlpConfig::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("MLP needs at least one layer");
  for (auto d : layer_dims) {
    if (d == 0) throw ConfigError("MLP layer sizes must be positive");
  }
  if (activations.size() != layers()) throw ConfigError("MLP: one activation per layer required");
}

MlpParams MlpParams::random(const MlpConfig& config, Rng& rng) {
  config.validate();
  MlpParams p;
  for (std::size_t l = 1; l < config.layer_dims.size(); ++l) {
    const std::size_t in = config.layer_dims[l - 1], out = config.layer_dims[l];
    Tensor W({out, in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : W.data()) v = u(rng);
    p.W.push_back(std::move(W));
    p.b.push_back(Tensor({out}));
  }
  return p;
}

void MlpParams::validate() const {
  if (W.empty() || W.size() != b.size()) throw ShapeError("MlpParams: weight/bias counts differ");
  for (std::size_t l = 0; l < W.size(); ++l) {
    if (W[l].rank() != 2 || b[l].size() != W[l].rows()) {
      throw ShapeError("MlpParams: layer " + std::to_string(l + 1) + " bias does not match weights");
    }
    if (l > 0 && W[l].cols() != W[l - 1].rows()) {
      throw ShapeError("MlpParams: layer " + std::to_string(l + 1) + " input width " +
                       std::to_string(W[l].cols()) + " but previous layer has " +
                       std::to_string(W[l - 1].rows()));
    }
  }
}

MlpVars bind_mlp(Tape& tape, const MlpParams& params, bool trainable) {
  params.validate();
  MlpVars v;
  for (std::size_t l = 0; l < params.W.size(); ++l) {
    v.W.push_back(trainable ? tape.parameter(params.W[l]) : tape.constant(params.W[l]));
    v.b.push_back(trainable ? tape.parameter(params.b[l]) : tape.constant(params.b[l]));
  }
  return v;
}

ActivationTrace mlp_forward(const MlpVars& net, const std::vector<Activation>& activations, Var x) {
  return oplstm_forward(net.W, net.b, activations, x);
}

namespace {

Var head_loss(const ActivationTrace& trace, Activation head, Var y) {
  if (head == Activation::Softmax) return softmax_cross_entropy(trace.pre.back(), y);
  return mse(trace.a.back(), y);
}

Var detach(Tape& tape, Var v) { return tape.constant(v.value()); }

}  // namespace

Var mlp_loss(const MlpVars& net, const std::vector<Activation>& activations, Var x, Var y) {
  return head_loss(mlp_forward(net, activations, x), activations.back(), y);
}

std::vector<Var> mlp_pre_activation_grads(const MlpVars& net, const std::vector<Activation>& activations,
                                          const ActivationTrace& trace, Var y) {
  const std::size_t L = net.W.size();
  Tape& tape = y.tape();
  require_same_shape(trace.a.back().value(), y.value(), "mlp gradients");
  const double rows = static_cast<double>(y.value().rows());
  std::vector<Var> delta(L);

  auto relu_mask = [&](std::size_t l) {
    Tensor m = trace.pre[l].value();
    for (auto& v : m.data()) v = v > 0.0 ? 1.0 : 0.0;
    return tape.constant(std::move(m));
  };

  const Activation head = activations.back();
  if (head == Activation::Softmax) {
    delta[L - 1] = scale(sub(trace.a.back(), y), 1.0 / rows);
  } else {
    delta[L - 1] = scale(sub(trace.a.back(), y), 2.0 / static_cast<double>(y.value().size()));
    if (head == Activation::Relu) delta[L - 1] = mul(delta[L - 1], relu_mask(L - 1));
  }
  for (std::size_t l = L - 1; l-- > 0;) {
    Var g = matmul(delta[l + 1], net.W[l + 1]);
    switch (activations[l]) {
      case Activation::Relu: g = mul(g, relu_mask(l)); break;
      case Activation::Identity: break;
      case Activation::Softmax: throw ContractError("MLP gradients: softmax is only supported as the head");
    }
    delta[l] = g;
  }
  return delta;
}

MlpVars mlp_loss_gradients(const MlpVars& net, const std::vector<Activation>& activations, Var x, Var y,
                           bool create_graph) {
  Tape& tape = x.tape();
  const ActivationTrace trace = mlp_forward(net, activations, x);
  const std::vector<Var> delta = mlp_pre_activation_grads(net, activations, trace, y);
  const Var ones = tape.constant(Tensor({x.value().rows(), 1}, std::vector<double>(x.value().rows(), 1.0)));
  MlpVars grads;
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    Var gW = matmul_at(delta[l], trace.a[l]);
    Var gb = reshape(matmul_at(delta[l], ones), {net.b[l].value().size()});
    if (!create_graph) {
      gW = detach(tape, gW);
      gb = detach(tape, gb);
    }
    grads.W.push_back(gW);
    grads.b.push_back(gb);
  }
  return grads;
}

MlpVars maml_adapt(const MlpVars& init, const std::vector<Activation>& activations, Tape& tape,
                   const Examples& support, const MamlOptions& options) {
  if (support.size() == 0) throw ContractError("maml_adapt: empty support set");
  if (!(options.inner_lr >= 0.0)) throw ContractError("maml_adapt: inner learning rate must be >= 0");
  const Var x = tape.constant(support.inputs);
  const Var y = tape.constant(support.targets);
  MlpVars cur = init;
  for (std::size_t s = 0; s < options.steps; ++s) {
    const MlpVars g = mlp_loss_gradients(cur, activations, x, y, !options.first_order);
    for (std::size_t l = 0; l < cur.W.size(); ++l) {
      cur.W[l] = sub(cur.W[l], scale(g.W[l], options.inner_lr));
      cur.b[l] = sub(cur.b[l], scale(g.b[l], options.inner_lr));
    }
  }
  return cur;
}

MlpParams maml_adapt(const MlpParams& init, const std::vector<Activation>& activations,
                     const Examples& support, const MamlOptions& options) {
  Tape tape;
  const MlpVars out = maml_adapt(bind_mlp(tape, init, false), activations, tape, support, options);
  MlpParams p;
  for (std::size_t l = 0; l < out.W.size(); ++l) {
    p.W.push_back(out.W[l].value());
    p.b.push_back(out.b[l].value());
  }
  return p;
}

Var maml_meta_loss(const MlpVars& init, const std::vector<Activation>& activations, Tape& tape,
                   const Task& task, const MamlOptions& options) {
  validate_task(task);
  if (task.query.size() == 0) throw ContractError("maml_meta_loss: empty query set");
  const MlpVars adapted = options.steps == 0 ? init : maml_adapt(init, activations, tape, task.support, options);
  return mlp_loss(adapted, activations, tape.constant(task.query.inputs), tape.constant(task.query.targets));
}

// ------------------------------------------------------------- ProtoNet

namespace {

std::vector<double> class_counts(const Tensor& onehot, std::size_t n) {
  const std::size_t N = onehot.cols();
  std::vector<double> counts(N, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < N; ++c) counts[c] += onehot(i, c);
  }
  for (std::size_t c = 0; c < N; ++c) {
    if (counts[c] <= 0.0) throw ContractError("proto_prototypes: class " + std::to_string(c) + " has no examples");
  }
  return counts;
}

}  // namespace

PrototypeSet proto_prototypes(const Tensor& embeddings, const Tensor& onehot) {
  if (embeddings.rank() != 2 || onehot.rank() != 2 || embeddings.rows() != onehot.rows()) {
    throw ShapeError("proto_prototypes: embeddings " + shape_string(embeddings.shape()) + " vs labels " +
                     shape_string(onehot.shape()));
  }
  const std::vector<double> counts = class_counts(onehot, embeddings.rows());
  Tensor c = matmul_values(transpose_values(onehot), embeddings);
  const std::size_t D = c.cols();
  for (std::size_t n = 0; n < counts.size(); ++n) {
    for (std::size_t j = 0; j < D; ++j) c(n, j) /= counts[n];
  }
  return {std::move(c)};
}

Tensor proto_predict(const PrototypeSet& protos, const Tensor& embeddings) {
  const Tensor e = embeddings.rank() == 1 ? embeddings.reshaped({1, embeddings.size()}) : embeddings;
  if (e.cols() != protos.dim()) {
    throw ShapeError("proto_predict: embedding width " + std::to_string(e.cols()) + " vs prototype width " +
                     std::to_string(protos.dim()));
  }
  const std::size_t q = e.rows(), N = protos.classes(), D = protos.dim();
  Tensor scores({q, N});
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t n = 0; n < N; ++n) {
      double d = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        const double diff = e(i, j) - protos.prototypes(n, j);
        d += diff * diff;
      }
      scores(i, n) = -d;
    }
  }
  Tensor p = softmax_rows(scores);
  return embeddings.rank() == 1 ? p.reshaped({N}) : p;
}

std::pair<Tensor, Tensor> proto_as_linear(const PrototypeSet& protos) {
  if (protos.classes() == 0) throw ContractError("proto_as_linear: no prototypes");
  Tensor W = protos.prototypes;
  W *= 2.0;
  Tensor b({protos.classes()});
  for (std::size_t n = 0; n < protos.classes(); ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < protos.dim(); ++j) s += protos.prototypes(n, j) * protos.prototypes(n, j);
    b[n] = -s;
  }
  return {std::move(W), std::move(b)};
}

Var proto_prototypes(Var embeddings, const Tensor& onehot) {
  const Tensor& e = embeddings.value();
  if (e.rank() != 2 || onehot.rank() != 2 || e.rows() != onehot.rows()) {
    throw ShapeError("proto_prototypes: embeddings " + shape_string(e.shape()) + " vs labels " +
                     shape_string(onehot.shape()));
  }
  const std::vector<double> counts = class_counts(onehot, e.rows());
  Tensor inv({counts.size()});
  for (std::size_t n = 0; n < counts.size(); ++n) inv[n] = 1.0 / counts[n];
  Tape& tape = embeddings.tape();
  return scale_rows(matmul_at(tape.constant(onehot), embeddings), tape.constant(std::move(inv)));
}

Var proto_logits(Var prototypes, Var query_embeddings) {
  const std::size_t q = query_embeddings.value().rows(), N = prototypes.value().rows();
  const Var cross = scale(matmul_bt(query_embeddings, prototypes), 2.0);
  const Var qn = reshape(scale(row_sums(square(query_embeddings)), -1.0), {q});
  const Var cn = reshape(scale(row_sums(square(prototypes)), -1.0), {N});
  return add_row(add_col(cross, qn), cn);
}

}  // namespace oplm
