#pragma once

#include <stdexcept>
#include <string>

namespace sirctl {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A watched condition never held on the simulated horizon.
class NotReached : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No admissible schedule satisfies the requested objective.
class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative procedure stopped before meeting its tolerance.
class NotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed scenario configuration (key path and line are in the message).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sirctl
