#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace auxcal {

// Base class for every error raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI's structured error line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse_error"; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation_error"; }
};

class PreconditionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "precondition_error"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric_error"; }
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }
  const char* kind() const noexcept override { return "transport_error"; }

 private:
  int status_;
};

class FixtureMissError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "fixture_miss"; }
};

// A pipeline stage found a record without a field it depends on.
class MissingFieldError : public Error {
 public:
  MissingFieldError(const std::string& field, const std::string& record_id)
      : Error("missing field '" + field + "' on record '" + record_id + "'"), field_(field) {}
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "missing_field"; }

 private:
  std::string field_;
};

}  // namespace auxcal
