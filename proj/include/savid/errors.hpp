#pragma once

#include <stdexcept>
#include <string>

namespace savid {

// Malformed input: bad shapes, out-of-range options, inconsistent layouts.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A numerical check failed or a computation produced non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotImplementedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace savid
