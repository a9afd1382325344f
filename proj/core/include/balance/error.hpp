#pragma once

#include <stdexcept>
#include <string>

namespace balance {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV row, manifest, serialized model).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0)
      : Error(line ? message + " (line " + std::to_string(line) + ")" : message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A value violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input series is shorter than an operation requires.
class TooShortError : public Error {
 public:
  using Error::Error;
};

/// Function argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver hit its iteration cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Input data cannot support the requested computation.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace balance
