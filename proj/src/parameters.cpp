#include "oplm/parameters.hpp"

#include <cmath>

namespace oplm {

std::size_t Parameters::add(std::string name, Tensor value) {
  for (const auto& n : names_) {
    if (n == name) throw ContractError("duplicate parameter name: " + name);
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t Parameters::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ContractError("unknown parameter: " + name);
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<Var> Parameters::bind(Tape& tape, bool trainable, const std::vector<bool>& frozen) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const bool is_frozen = i < frozen.size() && frozen[i];
    out.push_back(trainable && !is_frozen ? tape.parameter(values_[i]) : tape.constant(values_[i]));
  }
  return out;
}

AdamState AdamState::for_parameters(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.push_back(Tensor::zeros_like(p));
    s.second_moment.push_back(Tensor::zeros_like(p));
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamOptions& options) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k], grads[k], "adam_step");
    require_same_shape(params[k], state.first_moment[k], "adam_step");
    require_same_shape(params[k], state.second_moment[k], "adam_step");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const Tensor& g = grads[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

}  // namespace oplm
