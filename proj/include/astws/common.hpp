#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace astws {

using Complex = std::complex<double>;

// Invalid parameter values or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller-supplied data that violates an operation's preconditions
// (empty signals, mismatched shapes, wrong sample rate).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical data that cannot be processed (non-finite values).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void require_input(bool ok, const std::string& what) {
  if (!ok) throw InputError(what);
}

}  // namespace astws
