#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csnet {

enum class Errc {
  MissingCoordinate,
  DuplicateCoordinate,
  UnparsableLabel,
  IndexOutOfRange,
  MalformedCsv,
  NonNumericCell,
  DuplicateColumnLabel,
  NonMonotoneTime,
  IoFailure,
  ShapeMismatch,
  TapeMismatch,
  InvalidRate,
  InsufficientHistory,
  SingularDesign,
  UndefinedScale,
  LengthMismatch,
  NoDefinedSeries,
  ProtocolMismatch,
  InvalidConfig,
  IncompatibleModel,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace csnet
