#include "nhmc/error.hpp"

namespace nhmc {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NegativeEntry: return "NegativeEntry";
    case ErrorKind::RowSumOutOfTolerance: return "RowSumOutOfTolerance";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NotIrreducible: return "NotIrreducible";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::HorizonExceeded: return "HorizonExceeded";
    case ErrorKind::NonpositiveTheta: return "NonpositiveTheta";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorKind::InvalidN: return "InvalidN";
    case ErrorKind::InvalidAlpha: return "InvalidAlpha";
    case ErrorKind::DriftBoundViolated: return "DriftBoundViolated";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

ErrorClass classify(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NegativeEntry:
    case ErrorKind::RowSumOutOfTolerance:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidN:
    case ErrorKind::InvalidAlpha:
    case ErrorKind::SyntaxError:
    case ErrorKind::SchemaError:
    case ErrorKind::UnsupportedFormat:
      return ErrorClass::Config;
    case ErrorKind::IoError:
      return ErrorClass::Io;
    default:
      return ErrorClass::Numeric;
  }
}

}  // namespace nhmc
