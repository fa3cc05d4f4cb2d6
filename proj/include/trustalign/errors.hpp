#pragma once

#include <stdexcept>
#include <string>

namespace trustalign {

/// Input rejected by a precondition or schema check (CLI exit code 2).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Computation produced non-finite values or diverged (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace trustalign
