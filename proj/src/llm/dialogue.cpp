// SPDX-License-Identifier: Apache-2.0

#include "seedforge/llm/dialogue.hpp"

#include "seedforge/common/error.hpp"

namespace seedforge::llm {

std::string_view to_string(PromptKind kind) noexcept {
  switch (kind) {
    case PromptKind::FeatureAnalysis: return "feature_analysis";
    case PromptKind::CreateGenerator: return "create_generator";
    case PromptKind::ExtractLibrary: return "extract_library";
    case PromptKind::RareFeatureExtraction: return "rare_feature_extraction";
    case PromptKind::RareFeatureMutation: return "rare_feature_mutation";
    case PromptKind::HavocMutation: return "havoc_mutation";
    case PromptKind::PatternMutation: return "pattern_mutation";
    case PromptKind::Regenerate: return "regenerate";
  }
  return "";
}

std::optional<PromptKind> prompt_kind_from_string(std::string_view id) noexcept {
  for (auto kind : kAllPromptKinds) {
    if (to_string(kind) == id) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Role role) noexcept {
  return role == Role::User ? "user" : "assistant";
}

void Dialogue::add_user(PromptKind kind, std::string text) {
  if (!turns_.empty() && turns_.back().role == Role::User) {
    throw Error(ErrorKind::InvalidDialogue, "two consecutive user turns");
  }
  turns_.push_back(Turn{Role::User, std::move(text), kind});
}

void Dialogue::add_assistant(std::string text) {
  if (turns_.empty() || turns_.back().role != Role::User) {
    throw Error(ErrorKind::InvalidDialogue, "assistant turn must follow a user turn");
  }
  turns_.push_back(Turn{Role::Assistant, std::move(text), std::nullopt});
}

PromptKind Dialogue::last_user_kind() const {
  for (auto it = turns_.rbegin(); it != turns_.rend(); ++it) {
    if (it->role == Role::User && it->kind) return *it->kind;
  }
  throw Error(ErrorKind::InvalidDialogue, "no user turn");
}

void Dialogue::validate_for_submit() const {
  if (turns_.empty()) throw Error(ErrorKind::InvalidDialogue, "empty dialogue");
  if (turns_.front().role != Role::User) {
    throw Error(ErrorKind::InvalidDialogue, "first turn must be a user turn");
  }
  if (turns_.back().role != Role::User) {
    throw Error(ErrorKind::InvalidDialogue, "last turn must be a user turn");
  }
}

std::uint64_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::uint64_t estimate_tokens(const Dialogue& dialogue) {
  std::uint64_t chars = 0;
  for (const auto& turn : dialogue.turns()) chars += turn.text.size();
  return (chars + 3) / 4;
}

}  // namespace seedforge::llm
