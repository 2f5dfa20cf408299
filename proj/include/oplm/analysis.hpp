#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "oplm/baselines.hpp"
#include "oplm/oplstm.hpp"

namespace oplm {

/// Flattened output-layer update directions relative to the initial H^(L).
struct UpdateDirections {
  Tensor op;                    // OP-LSTM after T passes
  Tensor gd;                    // T full-support gradient steps on H^(L)
  std::optional<Tensor> proto;  // prototype head; classification only
};

struct DirectionStats {
  double cos_op_gd = 0.0;
  double euclid_op_gd = 0.0;
  std::optional<double> cos_op_proto;
  std::optional<double> euclid_op_proto;
};

/// Euclidean distance between equal-length vectors (ShapeError otherwise).
double euclidean_distance(const Tensor& a, const Tensor& b);

/// The gradient-descent direction only moves the output matrix: the body
/// stays at H_0, biases stay fixed, and the loss is the support loss of the
/// base network. Steps and learning rate default to the model's unroll and 0.01.
UpdateDirections update_directions(const OpLstmModel& model, const Task& task, double gd_lr = 0.01,
                                   std::optional<std::size_t> gd_steps = std::nullopt);

DirectionStats compare_directions(const UpdateDirections& d);

struct DirectionSummary {
  std::vector<DirectionStats> per_task;
  DirectionStats mean;
};

DirectionSummary update_direction_analysis(const OpLstmModel& model, const std::vector<Task>& tasks,
                                           double gd_lr = 0.01, std::optional<std::size_t> gd_steps = std::nullopt);

}  // namespace oplm
