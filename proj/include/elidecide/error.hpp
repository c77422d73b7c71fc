#pragma once

#include <stdexcept>
#include <string>

namespace elidecide {

enum class ErrorKind {
  ZeroVector,
  NoPositives,
  FormatError,
  DimensionMismatch,
  SingularMatrix,
  InsufficientClasses,
  EmptyClass,
  DegenerateClass,
  SizeMismatch,
  EmptyQuantile,
  SameClassNegative,
  NoKnownClasses,
  EmptyTestSet,
  InvalidArgument,
  IoError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::InsufficientClasses: return "InsufficientClasses";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::DegenerateClass: return "DegenerateClass";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::EmptyQuantile: return "EmptyQuantile";
    case ErrorKind::SameClassNegative: return "SameClassNegative";
    case ErrorKind::NoKnownClasses: return "NoKnownClasses";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it to an exit code or message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define ELIDECIDE_REQUIRE(cond, kind, msg)              \
  do {                                                  \
    if (!(cond)) throw ::elidecide::Error((kind), (msg)); \
  } while (0)

}  // namespace elidecide
