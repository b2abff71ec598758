#pragma once

#include <stdexcept>
#include <string>

namespace topicattn {

// Base of every error thrown by the library. The CLI maps the three leaf kinds
// onto exit codes 2 (config), 3 (input) and 4 (numeric).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class InputError : public Error {
public:
  using Error::Error;
};

/// Archive bytes that parse but violate the format's invariants.
class CorruptArchive : public InputError {
public:
  using InputError::InputError;
};

class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace topicattn
