#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nhmc {

enum class ErrorKind {
  NegativeEntry,
  RowSumOutOfTolerance,
  DimensionMismatch,
  InvalidArgument,
  NotIrreducible,
  NoConvergence,
  HorizonExceeded,
  NonpositiveTheta,
  LengthMismatch,
  EmptyInput,
  InstanceTooLarge,
  InvalidN,
  InvalidAlpha,
  DriftBoundViolated,
  SyntaxError,
  SchemaError,
  UnsupportedFormat,
  IoError,
};

// Broad classes used to map failures onto process exit codes.
enum class ErrorClass { Config, Numeric, Io };

const char* to_string(ErrorKind kind) noexcept;
ErrorClass classify(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorClass error_class() const noexcept { return classify(kind_); }

 private:
  ErrorKind kind_;
};

// Row and column indices carried by matrix validation errors are 1-based,
// matching how states are labelled in configs and reports.
class MatrixEntryError : public Error {
 public:
  MatrixEntryError(ErrorKind kind, std::size_t row, std::size_t col,
                   double value, const std::string& message)
      : Error(kind, message), row_(row), col_(col), value_(value) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t row_;
  std::size_t col_;
  double value_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string path, std::string reason)
      : Error(ErrorKind::SchemaError, path + ": " + reason),
        path_(std::move(path)),
        reason_(std::move(reason)) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string path_;
  std::string reason_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t line, const std::string& message)
      : Error(ErrorKind::SyntaxError,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace nhmc
