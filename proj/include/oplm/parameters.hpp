#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "oplm/tape.hpp"

namespace oplm {

/// Ordered, named collection of trainable tensors.
class Parameters {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }

  /// Index of `name`; throws ContractError when absent.
  std::size_t index_of(const std::string& name) const;

  /// Total scalar count.
  std::size_t scalar_count() const;

  /// Puts every tensor on the tape, as a parameter when `trainable`, otherwise
  /// as a constant. Entries listed in `frozen` are always constants.
  std::vector<Var> bind(Tape& tape, bool trainable, const std::vector<bool>& frozen = {}) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Moment estimates for Adam; shapes mirror the parameters exactly.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static AdamState for_parameters(const std::vector<Tensor>& params);
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update applied in place.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamOptions& options);

}  // namespace oplm
