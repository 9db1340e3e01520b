// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "seedforge/llm/dialogue.hpp"

namespace seedforge::llm {

/// Currency per token, split by direction.
struct Price {
  double prompt = 0.0;
  double completion = 0.0;
  bool operator==(const Price&) const = default;
};

using PriceTable = std::map<std::string, Price, std::less<>>;

struct TokenTotals {
  std::uint64_t prompt = 0;
  std::uint64_t completion = 0;

  std::uint64_t sum() const noexcept { return prompt + completion; }
  bool operator==(const TokenTotals&) const = default;
};

/// Cumulative token usage per model.
class UsageLedger {
 public:
  /// Adds the completion's counts. Throws UnknownModel if `prices` has no
  /// entry for completion.model_id.
  void record(const Completion& completion, const PriceTable& prices);

  TokenTotals totals() const;
  TokenTotals totals(const std::string& model_id) const;
  const std::map<std::string, TokenTotals>& per_model() const noexcept { return per_model_; }

  /// Sum over models of tokens x price, per direction.
  double cost(const PriceTable& prices) const;

  nlohmann::json to_json() const;
  static UsageLedger from_json(const nlohmann::json& json);

  bool operator==(const UsageLedger&) const = default;

 private:
  std::map<std::string, TokenTotals> per_model_;
};

/// Functional form: returns `ledger` with `completion` recorded.
UsageLedger record_usage(UsageLedger ledger, const Completion& completion, const PriceTable& prices);

}  // namespace seedforge::llm
