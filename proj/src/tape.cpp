#include "oplm/tape.hpp"

#include <string>

namespace oplm {

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn, const char* op) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  nodes_.push_back(Node{std::move(value), requires_grad, requires_grad ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr, "constant"); }

Var Tape::parameter(Tensor value) {
  Var v = push(std::move(value), true, nullptr, "parameter");
  params_.push_back(v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string(op) + ": operand from another tape");
    needs = needs || in.requires_grad();
  }
  return push(std::move(value), needs, std::move(fn), op);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, const char* op) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError(std::string(op) + ": operand from another tape");
    needs = needs || in.requires_grad();
  }
  return push(std::move(value), needs, std::move(fn), op);
}

void Tape::accumulate(std::size_t id, Tensor grad) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grads_[id];
  if (slot.empty()) {
    slot = std::move(grad);
  } else {
    slot += grad;
  }
}

std::vector<Tensor> Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(loss.value().shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  if (nodes_[loss.id()].requires_grad) {
    grads_[loss.id()] = Tensor(loss.value().shape(), 1.0);
  }
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || grads_[i].empty()) continue;
    Tensor g = std::move(grads_[i]);
    grads_[i] = Tensor();
    node.backward(g, *this);
  }
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (std::size_t id : params_) {
    if (grads_[id].empty()) {
      out.push_back(Tensor::zeros_like(nodes_[id].value));
    } else {
      out.push_back(std::move(grads_[id]));
    }
  }
  grads_.clear();
  return out;
}

}  // namespace oplm
