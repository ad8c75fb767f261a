#pragma once

#include <stdexcept>
#include <string>

namespace demotraj {

/// Raised when a caller violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a query falls outside the domain of a function (e.g. s outside [0,1]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a replayed time map never reaches the last waypoint timing.
class IncompleteReplay : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation does not fit the current state of a stateful object
/// (for example starting a replay session twice).
class StateConflict : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace demotraj
