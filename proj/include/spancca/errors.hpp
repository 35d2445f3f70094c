#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spancca {

/// Coarse error classes, used by the CLI to derive its exit code.
enum class ErrorCategory {
  usage = 2,   // bad flags, malformed constraint specs, invalid parameters
  data = 3,    // unreadable or inconsistent input data
  solver = 4,  // errors raised while solving
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string message)
      : std::runtime_error(std::move(message)), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class UsageError : public Error {
 public:
  explicit UsageError(std::string message)
      : Error(ErrorCategory::usage, std::move(message)) {}
};

/// Malformed input file; carries the 1-based line where parsing failed.
class ParseError : public Error {
 public:
  ParseError(std::string message, std::int64_t line)
      : Error(ErrorCategory::data,
              std::move(message) + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::int64_t line() const noexcept { return line_; }

 private:
  std::int64_t line_;
};

class UnsupportedFormat : public Error {
 public:
  explicit UnsupportedFormat(std::string message)
      : Error(ErrorCategory::data, std::move(message)) {}
};

/// A column with zero sample variance; the caller must drop it explicitly.
class DegenerateColumn : public Error {
 public:
  explicit DegenerateColumn(std::int64_t column)
      : Error(ErrorCategory::data,
              "column " + std::to_string(column) + " has zero variance"),
        column_(column) {}

  std::int64_t column() const noexcept { return column_; }

 private:
  std::int64_t column_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(std::string message)
      : Error(ErrorCategory::data, std::move(message)) {}
};

class RankError : public Error {
 public:
  explicit RankError(std::string message)
      : Error(ErrorCategory::solver, std::move(message)) {}
};

/// Raised by projection operators when the argument is identically zero.
class ZeroInput : public Error {
 public:
  ZeroInput() : Error(ErrorCategory::solver, "projection input is zero") {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(std::string message)
      : Error(ErrorCategory::solver, std::move(message)) {}
};

/// Every sampling round was discarded; the low-rank surrogate is zero.
class DegenerateInput : public Error {
 public:
  explicit DegenerateInput(std::string message)
      : Error(ErrorCategory::solver, std::move(message)) {}
};

class PrecondError : public Error {
 public:
  explicit PrecondError(std::string message)
      : Error(ErrorCategory::solver, std::move(message)) {}
};

}  // namespace spancca
