#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace simpletag {

// Bad configuration or invalid switch combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unusable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A V2 line that does not match the grammar. `line()` is 1-based, 0 when unknown.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, std::string cause)
      : DataError(line ? "line " + std::to_string(line) + ": " + cause : cause),
        line_(line),
        cause_(std::move(cause)) {}

  std::size_t line() const { return line_; }
  const std::string& cause() const { return cause_; }

 private:
  std::size_t line_;
  std::string cause_;
};

// Gold triplets that cannot be written onto one tag sequence/matrix.
class ConflictError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values or shape mismatches inside the numeric pipeline.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace simpletag
