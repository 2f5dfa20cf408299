#pragma once

#include <string>
#include <vector>

#include "oplm/ops.hpp"

namespace oplm {

enum class Activation { Relu, Softmax, Identity };

inline Var apply_activation(Var pre, Activation act) {
  switch (act) {
    case Activation::Relu: return relu(pre);
    case Activation::Softmax: return softmax(pre);
    case Activation::Identity: return pre;
  }
  return pre;
}

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

/// Hidden layers use ReLU; the head is Softmax for classification, Identity otherwise.
std::vector<Activation> default_activations(std::size_t layers, bool classification);

}  // namespace oplm
