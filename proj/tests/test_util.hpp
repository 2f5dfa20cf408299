#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "oplm/tape.hpp"

namespace oplm::testkit {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Builds a scalar loss from parameters registered on the given tape.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double evaluate_loss(const LossBuilder& build, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(tape.constant(p));
  return build(tape, vars).value().item();
}

inline std::vector<Tensor> tape_gradients(const LossBuilder& build, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return tape.backward(build(tape, vars));
}

/// Central differences with step eps, every coordinate.
inline std::vector<Tensor> numeric_gradients(const LossBuilder& build, std::vector<Tensor> params,
                                             double eps = 1e-5) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor g = Tensor::zeros_like(params[k]);
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      params[k][i] = saved + eps;
      const double up = evaluate_loss(build, params);
      params[k][i] = saved - eps;
      const double down = evaluate_loss(build, params);
      params[k][i] = saved;
      g[i] = (up - down) / (2 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all
/// parameters jointly; 0 when both vanish.
inline double gradient_relative_error(const LossBuilder& build, const std::vector<Tensor>& params,
                                      double eps = 1e-5) {
  const auto a = tape_gradients(build, params);
  const auto n = numeric_gradients(build, params, eps);
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      diff += (a[k][i] - n[k][i]) * (a[k][i] - n[k][i]);
      na += a[k][i] * a[k][i];
      nn += n[k][i] * n[k][i];
    }
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace oplm::testkit
