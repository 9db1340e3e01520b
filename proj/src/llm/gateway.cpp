// SPDX-License-Identifier: Apache-2.0

#include "seedforge/llm/gateway.hpp"

#include "seedforge/common/error.hpp"
#include "seedforge/common/log.hpp"
#include "seedforge/common/util.hpp"

namespace seedforge::llm {

Gateway::Gateway(std::unique_ptr<ChatBackend> backend, PromptLibrary prompts, GatewayConfig config)
    : backend_(std::move(backend)), prompts_(std::move(prompts)), config_(std::move(config)) {}

Completion Gateway::complete(const Dialogue& dialogue) { return complete(dialogue, config_.decoding); }

void Gateway::check_budget(const Dialogue& dialogue) {
  const auto estimate = backend_->estimate_prompt_tokens(dialogue);
  if (config_.token_cap) {
    const auto used = ledger_.totals().sum();
    if (used + estimate > *config_.token_cap) {
      exhausted_ = true;
      throw Error(ErrorKind::BudgetExceeded, "token cap " + std::to_string(*config_.token_cap) +
                                                 ", used " + std::to_string(used) + ", request " +
                                                 std::to_string(estimate));
    }
  }
  if (config_.cost_cap) {
    auto price = config_.prices.find(backend_->model_id());
    if (price == config_.prices.end()) throw Error(ErrorKind::UnknownModel, backend_->model_id());
    const double projected =
        ledger_.cost(config_.prices) + static_cast<double>(estimate) * price->second.prompt;
    if (projected > *config_.cost_cap) {
      exhausted_ = true;
      throw Error(ErrorKind::BudgetExceeded, "cost cap " + std::to_string(*config_.cost_cap));
    }
  }
}

Completion Gateway::complete(const Dialogue& dialogue, const Decoding& decoding) {
  dialogue.validate_for_submit();
  std::lock_guard<std::mutex> lock(mutex_);
  check_budget(dialogue);

  Completion completion;
  for (int attempt = 0;; ++attempt) {
    try {
      completion = backend_->complete(dialogue, decoding);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::TransportError || attempt >= config_.retries) throw;
      log_warn("LLM transport error, retrying: ", e.what());
    }
  }
  fault_point("llm.complete");

  ledger_.record(completion, config_.prices);
  ++completions_;
  transcript_.push_back(TranscriptEntry{dialogue.last_user_kind(), dialogue.turns().back().text,
                                        completion.text, completion.prompt_tokens,
                                        completion.completion_tokens});
  if (trim(completion.text).empty()) throw Error(ErrorKind::EmptyReply, completion.model_id);
  return completion;
}

UsageLedger Gateway::ledger() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return ledger_;
}

void Gateway::restore_ledger(UsageLedger ledger) {
  std::lock_guard<std::mutex> lock(mutex_);
  ledger_ = std::move(ledger);
}

double Gateway::cost() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return ledger_.cost(config_.prices);
}

bool Gateway::budget_exhausted() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return exhausted_;
}

std::size_t Gateway::completions() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return completions_;
}

std::vector<TranscriptEntry> Gateway::transcript() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return transcript_;
}

std::string extract_code_block(std::string_view text) {
  std::string result;
  auto open = text.find("```");
  if (open == std::string_view::npos) {
    result = trim(text);
  } else {
    // Skip the info string ("```python") up to the end of the fence line.
    auto body_start = text.find('\n', open + 3);
    if (body_start == std::string_view::npos) {
      result.clear();
    } else {
      ++body_start;
      auto close = text.find("```", body_start);
      auto body = close == std::string_view::npos ? text.substr(body_start)
                                                  : text.substr(body_start, close - body_start);
      result = trim(body);
    }
  }
  if (result.empty()) throw Error(ErrorKind::EmptyScript, "no code in reply");
  return result;
}

}  // namespace seedforge::llm
