#pragma once

#include <stdexcept>
#include <string>

namespace celltrain {

// Base class for all library errors. The CLI maps subtypes to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not chain (boxes, layers, delta vectors).
struct DimensionMismatch : Error {
  using Error::Error;
};

// A rotation interval spanning >= pi cannot be bounded by the tangent-cone
// construction; the caller must pre-split the theta interval.
struct RotationSpanTooLarge : Error {
  using Error::Error;
};

// Requested a subdivision of a cell whose normalized widths are all <= 1.
struct BelowThreshold : Error {
  using Error::Error;
};

struct EmptyDataset : Error {
  using Error::Error;
};

// Layer size list is empty, non-chaining, or contains non-positive sizes.
struct BadArch : Error {
  using Error::Error;
};

// The planner exhausted its iteration budget without connecting the goal.
struct UnreachableGoal : Error {
  using Error::Error;
};

// Malformed or inconsistent input file. `where` holds a line/field locator.
struct ValidationError : Error {
  std::string where;
  ValidationError(const std::string& where_, const std::string& what_)
      : Error(where_.empty() ? what_ : where_ + ": " + what_), where(where_) {}
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace celltrain
