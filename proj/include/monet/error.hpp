#pragma once

#include <stdexcept>
#include <string>

namespace monet {

/// Coarse failure classes. The CLI reports the category name as the first
/// field of its one-line error message and maps it to the exit code.
enum class ErrorCategory {
  Parse = 2,
  Config = 3,
  Data = 4,
  Shape = 5,
  Numeric = 6,
  Io = 7,
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Shape: return "shape";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorCategory::Parse,
              line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line), detail_(what) {}

  /// The same error with `context` (usually a path) in front of the line.
  ParseError(const std::string& context, const ParseError& inner)
      : Error(ErrorCategory::Parse,
              context + ": " +
                  (inner.line_ ? "line " + std::to_string(inner.line_) + ": " : std::string()) +
                  inner.detail_),
        line_(inner.line_), detail_(inner.detail_) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
  std::string detail_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::Shape, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

}  // namespace monet
