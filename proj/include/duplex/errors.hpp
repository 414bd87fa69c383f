#pragma once

#include <stdexcept>
#include <string>

namespace duplex {

// Bad input data: missing/malformed files, contract violations on user input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (NaN/Inf loss) or another numerical failure.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace duplex
