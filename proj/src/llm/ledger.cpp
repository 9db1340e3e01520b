// SPDX-License-Identifier: Apache-2.0

#include "seedforge/llm/ledger.hpp"

#include "seedforge/common/error.hpp"

namespace seedforge::llm {

void UsageLedger::record(const Completion& completion, const PriceTable& prices) {
  if (prices.find(completion.model_id) == prices.end()) {
    throw Error(ErrorKind::UnknownModel, completion.model_id);
  }
  auto& totals = per_model_[completion.model_id];
  totals.prompt += completion.prompt_tokens;
  totals.completion += completion.completion_tokens;
}

TokenTotals UsageLedger::totals() const {
  TokenTotals sum;
  for (const auto& [model, totals] : per_model_) {
    sum.prompt += totals.prompt;
    sum.completion += totals.completion;
  }
  return sum;
}

TokenTotals UsageLedger::totals(const std::string& model_id) const {
  auto it = per_model_.find(model_id);
  return it == per_model_.end() ? TokenTotals{} : it->second;
}

double UsageLedger::cost(const PriceTable& prices) const {
  double total = 0.0;
  for (const auto& [model, totals] : per_model_) {
    auto it = prices.find(model);
    if (it == prices.end()) throw Error(ErrorKind::UnknownModel, model);
    total += static_cast<double>(totals.prompt) * it->second.prompt +
             static_cast<double>(totals.completion) * it->second.completion;
  }
  return total;
}

nlohmann::json UsageLedger::to_json() const {
  auto json = nlohmann::json::object();
  for (const auto& [model, totals] : per_model_) {
    json[model] = {{"prompt_tokens", totals.prompt}, {"completion_tokens", totals.completion}};
  }
  return json;
}

UsageLedger UsageLedger::from_json(const nlohmann::json& json) {
  UsageLedger ledger;
  for (const auto& [model, totals] : json.items()) {
    ledger.per_model_[model] = TokenTotals{totals.at("prompt_tokens").get<std::uint64_t>(),
                                           totals.at("completion_tokens").get<std::uint64_t>()};
  }
  return ledger;
}

UsageLedger record_usage(UsageLedger ledger, const Completion& completion, const PriceTable& prices) {
  ledger.record(completion, prices);
  return ledger;
}

}  // namespace seedforge::llm
