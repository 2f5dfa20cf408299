#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "oplm/tensor.hpp"

namespace oplm {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
/// the node list is topologically sorted by construction and backward() is a
/// single reverse sweep.
///
/// A tape is single-owner. Build one per task (or per meta-batch) and drop it
/// once gradients have been read.
class Tape {
 public:
  /// Receives the upstream gradient of a node and pushes contributions to its
  /// inputs through Tape::accumulate.
  using BackwardFn = std::function<void(const Tensor& grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  /// Registers a differentiable leaf. backward() reports gradients for
  /// parameters in registration order.
  Var parameter(Tensor value);

  /// Appends an interior node. The backward closure is dropped when no input
  /// requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, const char* op);

  /// Gradients of a scalar node with respect to every registered parameter.
  /// Parameters that do not influence the loss get zeros of matching shape.
  std::vector<Tensor> backward(Var loss);

  /// Adds a gradient contribution for node `id` (only valid inside backward).
  void accumulate(std::size_t id, Tensor grad);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& parameter_ids() const { return params_; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn, const char* op);

  std::deque<Node> nodes_;
  std::vector<std::size_t> params_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace oplm
