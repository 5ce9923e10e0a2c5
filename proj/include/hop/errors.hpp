#pragma once

#include <stdexcept>
#include <string>

namespace hop {

// Bad caller input: wrong agent index, out-of-range timestep, dead agent acting.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration that cannot be realized (infeasible spawn, unknown key value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition on a value was violated (e.g. belief not normalized).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Optimization produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transition records delivered out of order.
class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Checkpoint could not be read or does not match the expected architecture.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hop
