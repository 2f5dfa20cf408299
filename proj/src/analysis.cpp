#include "oplm/analysis.hpp"

#include <cmath>

namespace oplm {

double euclidean_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("euclidean_distance: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

UpdateDirections update_directions(const OpLstmModel& model, const Task& task, double gd_lr,
                                   std::optional<std::size_t> gd_steps) {
  validate_task(task);
  const OpLstmConfig& cfg = model.config();
  const std::size_t L = cfg.layers();
  Tape tape;
  const OpLstmBound bound = model.bind(tape, false);
  const Tensor& H0 = bound.H0.back().value();
  auto flat = [](const Tensor& m) { return m.reshaped({m.size()}); };

  UpdateDirections d;
  const OpLstmState adapted = model.adapt(bound, tape, task.support);
  d.op = flat(adapted.H.back().value() - H0);

  // Gradient descent on the output matrix only.
  MlpVars net{bound.H0, bound.b};
  const Var x = tape.constant(task.support.inputs);
  const Var y = tape.constant(task.support.targets);
  const std::size_t steps = gd_steps.value_or(cfg.unroll);
  for (std::size_t s = 0; s < steps; ++s) {
    const MlpVars g = mlp_loss_gradients(net, cfg.activations, x, y, false);
    net.W[L - 1] = tape.constant(net.W[L - 1].value() - g.W[L - 1].value() * gd_lr);
  }
  d.gd = flat(net.W[L - 1].value() - H0);

  if (task.meta.kind == TaskKind::Classification) {
    const ActivationTrace trace = oplstm_forward(bound.H0, bound.b, cfg.activations, x);
    const PrototypeSet protos = proto_prototypes(trace.a[L - 1].value(), task.support.targets);
    const auto [W, b] = proto_as_linear(protos);
    if (W.shape() != H0.shape()) {
      throw ShapeError("update analysis: prototype head " + shape_string(W.shape()) + " vs output layer " +
                       shape_string(H0.shape()));
    }
    d.proto = flat(W - H0);
  }
  return d;
}

DirectionStats compare_directions(const UpdateDirections& d) {
  DirectionStats s;
  s.cos_op_gd = cosine_similarity(d.op, d.gd);
  s.euclid_op_gd = euclidean_distance(d.op, d.gd);
  if (d.proto) {
    s.cos_op_proto = cosine_similarity(d.op, *d.proto);
    s.euclid_op_proto = euclidean_distance(d.op, *d.proto);
  }
  return s;
}

DirectionSummary update_direction_analysis(const OpLstmModel& model, const std::vector<Task>& tasks, double gd_lr,
                                           std::optional<std::size_t> gd_steps) {
  if (tasks.empty()) throw ContractError("update_direction_analysis: no tasks");
  DirectionSummary out;
  double cg = 0, eg = 0, cp = 0, ep = 0;
  bool have_proto = true;
  for (const auto& t : tasks) {
    out.per_task.push_back(compare_directions(update_directions(model, t, gd_lr, gd_steps)));
    const auto& s = out.per_task.back();
    cg += s.cos_op_gd;
    eg += s.euclid_op_gd;
    if (s.cos_op_proto) {
      cp += *s.cos_op_proto;
      ep += *s.euclid_op_proto;
    } else {
      have_proto = false;
    }
  }
  const double n = static_cast<double>(tasks.size());
  out.mean.cos_op_gd = cg / n;
  out.mean.euclid_op_gd = eg / n;
  if (have_proto) {
    out.mean.cos_op_proto = cp / n;
    out.mean.euclid_op_proto = ep / n;
  }
  return out;
}

}  // namespace oplm
