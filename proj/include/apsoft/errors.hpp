#pragma once

#include <stdexcept>
#include <string>

namespace apsoft {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A precondition on an argument was violated.
struct InvalidArgument : Error {
  using Error::Error;
};

/// An integer value does not fit its declared bit width (strict mode).
struct PrecisionOverflow : Error {
  /// Name of the offending field or constant.
  std::string field;
  PrecisionOverflow(const std::string& field_name, const std::string& what)
      : Error(what), field(field_name) {}
};

/// The scaling factor is too coarse: floor(ln2 / S) == 0.
struct DegenerateScale : Error {
  using Error::Error;
};

/// The exponential sum collapsed to zero; no distribution can be formed.
struct DegenerateDistribution : Error {
  using Error::Error;
};

/// Column allocation failed or fields overlap illegally.
struct LayoutConflict : Error {
  using Error::Error;
};

/// Requested precision preset is not one of the shipped grid points.
struct UnknownPreset : Error {
  using Error::Error;
};

}  // namespace apsoft
