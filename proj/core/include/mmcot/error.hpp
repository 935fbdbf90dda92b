#pragma once

#include <stdexcept>
#include <string>

namespace mmcot {

// Shapes that do not line up for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (non-scalar loss, missing grad).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Out-of-domain scalar parameter (tau <= 0, lambda < 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN or Inf produced or supplied where finite values are required.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files and records.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmcot
