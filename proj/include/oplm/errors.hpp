#pragma once

#include <stdexcept>
#include <string>

namespace oplm {

/// Operand shapes do not agree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared in an input or result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The caller broke an API precondition (empty support, non-scalar loss, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace oplm
