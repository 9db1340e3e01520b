// SPDX-License-Identifier: Apache-2.0

#include "seedforge/common/error.hpp"

namespace seedforge {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::UnknownTemplate: return "UnknownTemplate";
    case ErrorKind::MissingBinding: return "MissingBinding";
    case ErrorKind::InvalidTemplate: return "InvalidTemplate";
    case ErrorKind::InvalidDialogue: return "InvalidDialogue";
    case ErrorKind::TransportError: return "TransportError";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::EmptyReply: return "EmptyReply";
    case ErrorKind::MockScriptMismatch: return "MockScriptMismatch";
    case ErrorKind::EmptyScript: return "EmptyScript";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::UnparseableReply: return "UnparseableReply";
    case ErrorKind::InterpreterMissing: return "InterpreterMissing";
    case ErrorKind::EmptyDatabase: return "EmptyDatabase";
    case ErrorKind::LineageMismatch: return "LineageMismatch";
    case ErrorKind::MalformedStats: return "MalformedStats";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::CorruptState: return "CorruptState";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ZeroValidGenerators: return "ZeroValidGenerators";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, std::string detail)
    : std::runtime_error(std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      detail_(std::move(detail)) {}

}  // namespace seedforge
