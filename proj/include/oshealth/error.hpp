#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oshealth {

/// Base for every error the library throws. Callers that only care about
/// "user input was bad" vs "something broke" can catch the two subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad argument, bad file content).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Text input that could not be parsed. Carries a 1-based line and column.
class ParseError : public ArgumentError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : ArgumentError(what + " (line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Statistical model cannot be estimated as specified (df < 0, no scale).
class IdentificationError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Numerical failure: singular matrices, undefined ratios.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Decompression failure part-way through an archive.
class StreamError : public Error {
 public:
  StreamError(const std::string& what, std::size_t bytes_consumed)
      : Error(what + " after " + std::to_string(bytes_consumed) +
              " compressed bytes"),
        bytes_consumed_(bytes_consumed) {}

  std::size_t bytes_consumed() const noexcept { return bytes_consumed_; }

 private:
  std::size_t bytes_consumed_;
};

/// Event store IO failure. `partial_count` records already made durable.
class StoreError : public Error {
 public:
  StoreError(const std::string& what, std::size_t partial_count)
      : Error(what), partial_count_(partial_count) {}

  std::size_t partial_count() const noexcept { return partial_count_; }

 private:
  std::size_t partial_count_;
};

}  // namespace oshealth
