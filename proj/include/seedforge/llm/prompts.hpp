// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seedforge/llm/dialogue.hpp"

namespace seedforge::llm {

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Placeholder names appearing as `{{name}}` in `body`, in order of first use.
std::vector<std::string> referenced_placeholders(std::string_view body);

/// The prompt bodies used by synthesis and mutation. Built-in defaults can be
/// overridden per template by files named `<template_id>.txt` in a directory.
class PromptLibrary {
 public:
  static PromptLibrary builtin();
  /// Loads overrides from `dir`; templates without a file keep the default.
  static PromptLibrary load(const std::filesystem::path& dir);

  /// Throws InvalidTemplate if `body` references an undeclared placeholder.
  void set(PromptKind kind, std::string body);
  const std::string& body(PromptKind kind) const;

  /// Substitutes every `{{name}}`. Throws MissingBinding(name) for an unbound
  /// placeholder. Extra bindings are ignored.
  std::string render(PromptKind kind, const Bindings& bindings) const;
  /// Same, addressed by template id. Throws UnknownTemplate.
  std::string render(std::string_view template_id, const Bindings& bindings) const;

  static const std::vector<std::string>& declared_placeholders(PromptKind kind);
  static std::string_view builtin_body(PromptKind kind);

 private:
  std::array<std::string, std::size(kAllPromptKinds)> bodies_;
};

}  // namespace seedforge::llm
