// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seedforge::llm {

enum class Role { User, Assistant };

/// Which prompt template produced a user turn. The mock backend keys its
/// replies on this, so orchestration order is checkable in tests.
enum class PromptKind {
  FeatureAnalysis,
  CreateGenerator,
  ExtractLibrary,
  RareFeatureExtraction,
  RareFeatureMutation,
  HavocMutation,
  PatternMutation,
  Regenerate,
};

inline constexpr PromptKind kAllPromptKinds[] = {
    PromptKind::FeatureAnalysis,       PromptKind::CreateGenerator,     PromptKind::ExtractLibrary,
    PromptKind::RareFeatureExtraction, PromptKind::RareFeatureMutation, PromptKind::HavocMutation,
    PromptKind::PatternMutation,       PromptKind::Regenerate,
};

std::string_view to_string(PromptKind kind) noexcept;
std::optional<PromptKind> prompt_kind_from_string(std::string_view id) noexcept;
std::string_view to_string(Role role) noexcept;

struct Turn {
  Role role;
  std::string text;
  std::optional<PromptKind> kind;  // set on user turns
};

/// An ordered user/assistant exchange. Starts with a user turn and alternates
/// strictly; the mutators enforce that.
class Dialogue {
 public:
  Dialogue() = default;
  Dialogue(PromptKind kind, std::string prompt) { add_user(kind, std::move(prompt)); }

  void add_user(PromptKind kind, std::string text);
  void add_assistant(std::string text);

  const std::vector<Turn>& turns() const noexcept { return turns_; }
  std::size_t size() const noexcept { return turns_.size(); }
  bool empty() const noexcept { return turns_.empty(); }

  /// Kind of the last user turn. Throws InvalidDialogue if there is none.
  PromptKind last_user_kind() const;
  /// Throws InvalidDialogue unless the dialogue is ready to submit.
  void validate_for_submit() const;

 private:
  std::vector<Turn> turns_;
};

struct Completion {
  std::string text;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  std::string model_id;
};

struct Decoding {
  double temperature = 0.7;
  std::uint32_t max_tokens = 4096;
};

/// Rough prompt-size estimate used when a backend cannot say better:
/// ceil(chars / 4) over all turns.
std::uint64_t estimate_tokens(std::string_view text);
std::uint64_t estimate_tokens(const Dialogue& dialogue);

}  // namespace seedforge::llm
