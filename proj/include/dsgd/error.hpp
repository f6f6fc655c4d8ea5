#pragma once

#include <stdexcept>
#include <string>

namespace dsgd {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Exhaustive enumeration would exceed the configured work budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up in a gradient, loss or iterate.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsgd
