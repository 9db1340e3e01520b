// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seedforge/llm/backend.hpp"
#include "seedforge/llm/dialogue.hpp"
#include "seedforge/llm/ledger.hpp"
#include "seedforge/llm/prompts.hpp"

namespace seedforge::llm {

struct GatewayConfig {
  Decoding decoding;
  PriceTable prices;
  /// Campaign caps. A request is refused before dispatch when the ledger plus
  /// its estimated prompt would exceed either cap.
  std::optional<std::uint64_t> token_cap;
  std::optional<double> cost_cap;
  /// Extra attempts after a TransportError.
  int retries = 2;
};

struct TranscriptEntry {
  PromptKind kind;
  std::string prompt;
  std::string reply;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;

  bool operator==(const TranscriptEntry&) const = default;
};

/// Single entry point for LLM calls: budget gate, retries, usage ledger and a
/// transcript. Calls are serialized.
class Gateway {
 public:
  Gateway(std::unique_ptr<ChatBackend> backend, PromptLibrary prompts, GatewayConfig config);

  /// Throws BudgetExceeded, TransportError, EmptyReply, MockScriptMismatch.
  Completion complete(const Dialogue& dialogue);
  Completion complete(const Dialogue& dialogue, const Decoding& decoding);

  std::string render(PromptKind kind, const Bindings& bindings) const {
    return prompts_.render(kind, bindings);
  }
  const PromptLibrary& prompts() const noexcept { return prompts_; }
  const GatewayConfig& config() const noexcept { return config_; }

  UsageLedger ledger() const;
  void restore_ledger(UsageLedger ledger);
  double cost() const;

  /// True once a request has been refused for budget reasons.
  bool budget_exhausted() const;
  std::size_t completions() const;
  std::vector<TranscriptEntry> transcript() const;

  ChatBackend& backend() noexcept { return *backend_; }

 private:
  void check_budget(const Dialogue& dialogue);

  std::unique_ptr<ChatBackend> backend_;
  PromptLibrary prompts_;
  GatewayConfig config_;

  mutable std::mutex mutex_;
  UsageLedger ledger_;
  std::vector<TranscriptEntry> transcript_;
  std::size_t completions_ = 0;
  bool exhausted_ = false;
};

/// Contents of the first fenced code block in `text`, or the whole text
/// trimmed when there is no fence. Throws EmptyScript if the result is blank.
std::string extract_code_block(std::string_view text);

}  // namespace seedforge::llm
