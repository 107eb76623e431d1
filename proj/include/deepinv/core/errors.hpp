#pragma once

#include <stdexcept>
#include <string>

namespace deepinv {

/// Shapes of two operands are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Value outside the domain of an operation (empty reduction, tiny divisor, t out of range).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke an API precondition (non-scalar loss, invalid config, illegal selector).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace deepinv
