#include "csnet/error.hpp"

namespace csnet {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MissingCoordinate: return "MissingCoordinate";
    case Errc::DuplicateCoordinate: return "DuplicateCoordinate";
    case Errc::UnparsableLabel: return "UnparsableLabel";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::MalformedCsv: return "MalformedCsv";
    case Errc::NonNumericCell: return "NonNumericCell";
    case Errc::DuplicateColumnLabel: return "DuplicateColumnLabel";
    case Errc::NonMonotoneTime: return "NonMonotoneTime";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::TapeMismatch: return "TapeMismatch";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::SingularDesign: return "SingularDesign";
    case Errc::UndefinedScale: return "UndefinedScale";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NoDefinedSeries: return "NoDefinedSeries";
    case Errc::ProtocolMismatch: return "ProtocolMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IncompatibleModel: return "IncompatibleModel";
  }
  return "Unknown";
}

}  // namespace csnet
