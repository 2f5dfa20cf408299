#include "oplm/learners.hpp"

namespace oplm {

ProblemDims problem_dims(const RunConfig& config, std::size_t image_pixels) {
  switch (config.task) {
    case TaskSource::Sine: return {1, 1, TaskKind::Regression};
    case TaskSource::Synthetic: return {config.synthetic_dim, config.n_way, TaskKind::Classification};
    case TaskSource::Images:
      if (image_pixels == 0) throw ContractError("problem_dims: image size unknown");
      return {image_pixels, config.n_way, TaskKind::Classification};
  }
  throw ContractError("problem_dims: bad task source");
}

namespace {

Var episode_loss(TaskKind kind, Var outputs, Var targets) {
  return kind == TaskKind::Classification ? softmax_cross_entropy(outputs, targets) : mse(outputs, targets);
}

void register_mlp(Parameters& params, const MlpParams& p) {
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    params.add("W." + std::to_string(l + 1), p.W[l]);
    params.add("b." + std::to_string(l + 1), p.b[l]);
  }
}

MlpVars mlp_vars(const std::vector<Var>& all) {
  MlpVars v;
  for (std::size_t i = 0; i + 1 < all.size(); i += 2) {
    v.W.push_back(all[i]);
    v.b.push_back(all[i + 1]);
  }
  return v;
}

}  // namespace

EpisodeResult PlainLstmLearner::run(Tape& tape, const Task& task, bool trainable) const {
  validate_task(task);
  const auto b = model_.bind(tape, trainable);
  const auto state = model_.ingest(b, tape, task.support);
  const Var out = model_.query_logits(b, tape, state, task.query.inputs);
  return {episode_loss(model_.config().kind, out, tape.constant(task.query.targets)), out};
}

std::vector<bool> OpLstmLearner::frozen() const {
  std::vector<bool> f(parameters().size(), false);
  f[model_.gamma_index()] = !model_.config().learn_gamma;
  return f;
}

EpisodeResult OpLstmLearner::run(Tape& tape, const Task& task, bool trainable) const {
  validate_task(task);
  const OpLstmBound b = model_.bind(tape, trainable);
  const OpLstmState adapted = model_.adapt(b, tape, task.support);
  const Var x = tape.constant(task.query.inputs);
  const TaskKind kind = task.meta.kind;
  const Var out = kind == TaskKind::Classification ? model_.logits(adapted, x) : model_.predict(adapted, x);
  return {episode_loss(kind, out, tape.constant(task.query.targets)), out};
}

MamlLearner::MamlLearner(MlpConfig net, MamlOptions options, Rng& rng)
    : net_(std::move(net)), options_(options) {
  register_mlp(params_, MlpParams::random(net_, rng));
}

MlpVars MamlLearner::bind(Tape& tape, bool trainable) const { return mlp_vars(params_.bind(tape, trainable)); }

EpisodeResult MamlLearner::run(Tape& tape, const Task& task, bool trainable) const {
  validate_task(task);
  const MlpVars init = bind(tape, trainable);
  const MlpVars adapted =
      options_.steps == 0 ? init : maml_adapt(init, net_.activations, tape, task.support, options_);
  const ActivationTrace trace = mlp_forward(adapted, net_.activations, tape.constant(task.query.inputs));
  const TaskKind kind = task.meta.kind;
  const Var out = kind == TaskKind::Classification ? trace.pre.back() : trace.a.back();
  return {episode_loss(kind, out, tape.constant(task.query.targets)), out};
}

ProtoNetLearner::ProtoNetLearner(MlpConfig embedding, Rng& rng) : net_(std::move(embedding)) {
  register_mlp(params_, MlpParams::random(net_, rng));
}

EpisodeResult ProtoNetLearner::run(Tape& tape, const Task& task, bool trainable) const {
  validate_task(task);
  if (task.meta.kind != TaskKind::Classification) throw ContractError("protonet needs a classification task");
  const MlpVars net = mlp_vars(params_.bind(tape, trainable));
  const Var support = mlp_forward(net, net_.activations, tape.constant(task.support.inputs)).a.back();
  const Var query = mlp_forward(net, net_.activations, tape.constant(task.query.inputs)).a.back();
  const Var logits = proto_logits(proto_prototypes(support, task.support.targets), query);
  return {softmax_cross_entropy(logits, tape.constant(task.query.targets)), logits};
}

std::unique_ptr<Learner> make_learner(const RunConfig& config, const ProblemDims& dims, Rng& rng) {
  const bool classification = dims.kind == TaskKind::Classification;
  std::vector<std::size_t> base{dims.input};
  base.insert(base.end(), config.hidden.begin(), config.hidden.end());
  base.push_back(dims.output);
  switch (config.learner) {
    case LearnerKind::PlainLstm: {
      PlainLstmConfig c;
      c.input_dim = dims.input;
      c.output_dim = dims.output;
      c.hidden = config.lstm_hidden;
      c.format = config.input_format.value_or(classification ? InputFormat::XY : InputFormat::XY_PREVPRED);
      c.ingestion = config.ingestion;
      c.unroll = config.lstm_unroll;
      c.kind = dims.kind;
      return std::make_unique<PlainLstmLearner>(c, rng);
    }
    case LearnerKind::OpLstm: {
      OpLstmConfig c;
      c.layer_dims = base;
      c.activations = default_activations(base.size() - 1, classification);
      c.coord_widths = config.coord_widths;
      c.unroll = config.unroll;
      c.gamma_init = config.gamma;
      c.learn_gamma = config.learn_gamma;
      c.update_order = config.update_order;
      return std::make_unique<OpLstmLearner>(c, rng);
    }
    case LearnerKind::Maml: {
      MlpConfig net{base, default_activations(base.size() - 1, classification)};
      MamlOptions o;
      o.steps = config.inner_steps;
      o.inner_lr = config.inner_lr;
      o.first_order = config.first_order;
      return std::make_unique<MamlLearner>(net, o, rng);
    }
    case LearnerKind::ProtoNet: {
      if (config.hidden.empty()) throw ConfigError("protonet needs at least one hidden layer");
      std::vector<std::size_t> dims_e{dims.input};
      dims_e.insert(dims_e.end(), config.hidden.begin(), config.hidden.end());
      std::vector<Activation> acts(dims_e.size() - 1, Activation::Relu);
      acts.back() = Activation::Identity;
      return std::make_unique<ProtoNetLearner>(MlpConfig{dims_e, acts}, rng);
    }
  }
  throw ContractError("make_learner: bad learner kind");
}

}  // namespace oplm
