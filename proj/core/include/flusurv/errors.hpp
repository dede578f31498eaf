#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flusurv {

// Base of every error raised by the library. `kind()` is a stable short tag
// used in machine-readable error reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Malformed input text. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error(line == 0 ? message
                        : "line " + std::to_string(line) + ": " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

// Input is well-formed but violates a data invariant (duplicate keys,
// negative counts, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

// Unexpected or missing columns, or category labels that do not fit the
// expected structure (e.g. an age group that is not a 5-year band).
class SchemaError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "schema"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

}  // namespace flusurv
