#pragma once

#include <stdexcept>
#include <string>

namespace trustlex {

// Error taxonomy mirrors the CLI exit codes: usage/config (1), bad input
// data (2), broken internal invariant (3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

inline void internal_check(bool condition, const std::string &message) {
  if (!condition) throw InternalError("internal invariant violated: " + message);
}

}  // namespace trustlex
