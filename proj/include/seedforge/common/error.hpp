// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seedforge {

enum class ErrorKind {
  // llm_gateway
  UnknownTemplate,
  MissingBinding,
  InvalidTemplate,
  InvalidDialogue,
  TransportError,
  BudgetExceeded,
  EmptyReply,
  MockScriptMismatch,
  EmptyScript,
  UnknownModel,
  // feature_catalog
  UnparseableReply,
  // script_sandbox
  InterpreterMissing,
  // mutation_engine
  EmptyDatabase,
  LineageMismatch,
  // fuzzer_bridge
  MalformedStats,
  IoError,
  // campaign
  CorruptState,
  ConfigError,
  ZeroValidGenerators,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `detail()` carries the payload named by
/// the kind (the missing binding, the unknown model id, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace seedforge
