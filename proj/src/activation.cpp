#include "oplm/activation.hpp"

namespace oplm {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "softmax") return Activation::Softmax;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation: " + name);
}

std::vector<Activation> default_activations(std::size_t layers, bool classification) {
  std::vector<Activation> acts(layers, Activation::Relu);
  if (!acts.empty()) acts.back() = classification ? Activation::Softmax : Activation::Identity;
  return acts;
}

}  // namespace oplm
