// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seedforge/llm/dialogue.hpp"

namespace seedforge::llm {

/// A chat-completion provider.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Throws TransportError on delivery failure.
  virtual Completion complete(const Dialogue& dialogue, const Decoding& decoding) = 0;

  /// Prompt tokens the next call on `dialogue` is expected to consume. Used for
  /// the pre-dispatch budget check.
  virtual std::uint64_t estimate_prompt_tokens(const Dialogue& dialogue) const {
    return estimate_tokens(dialogue);
  }

  virtual std::string model_id() const = 0;

  /// Resumable backend state (the mock's script cursor); null when stateless.
  virtual nlohmann::json save_state() const { return nullptr; }
  virtual void load_state(const nlohmann::json& /*state*/) {}
};

struct MockRecord {
  PromptKind kind;
  std::string reply;
  std::optional<std::uint64_t> prompt_tokens;
  std::optional<std::uint64_t> completion_tokens;
};

/// Deterministic scripted backend.
///
/// Sequential mode serves records strictly in order and fails with
/// MockScriptMismatch when the dialogue's prompt kind differs from the next
/// record's. ByKind mode keeps one cursor per prompt kind, so the reply is keyed
/// by (kind, per-kind call index). Running past the end of the script raises
/// TransportError unless `repeat_last` is set (ByKind only).
///
/// Script file format (JSON):
///   {"mode": "sequential" | "by_kind", "repeat_last": false, "model": "mock",
///    "responses": [{"kind": "create_generator", "reply": "...",
///                   "prompt_tokens": 10, "completion_tokens": 20}, ...]}
class MockBackend final : public ChatBackend {
 public:
  enum class Mode { Sequential, ByKind };

  MockBackend(std::vector<MockRecord> records, Mode mode = Mode::Sequential,
              bool repeat_last = false, std::string model = "mock");

  MockBackend(MockBackend&& other) noexcept;

  static MockBackend from_json(const nlohmann::json& script);
  static MockBackend load(const std::filesystem::path& path);

  Completion complete(const Dialogue& dialogue, const Decoding& decoding) override;
  std::uint64_t estimate_prompt_tokens(const Dialogue& dialogue) const override;
  std::string model_id() const override { return model_; }
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  std::size_t calls() const;
  std::size_t calls(PromptKind kind) const;

 private:
  const MockRecord* peek(PromptKind kind) const;

  std::vector<MockRecord> records_;
  Mode mode_;
  bool repeat_last_;
  std::string model_;

  mutable std::mutex mutex_;
  std::size_t cursor_ = 0;                       // sequential
  std::map<PromptKind, std::size_t> kind_cursor_;  // by-kind
  std::map<PromptKind, std::size_t> served_;
};

struct HttpBackendConfig {
  /// Scheme, host and optional port, e.g. "https://api.openai.com".
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions endpoint over HTTP(S).
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  Completion complete(const Dialogue& dialogue, const Decoding& decoding) override;
  std::string model_id() const override { return config_.model; }

  /// Request body for `dialogue`; exposed for tests of the wire format.
  nlohmann::json request_body(const Dialogue& dialogue, const Decoding& decoding) const;
  /// Parses a chat-completions response body. Throws TransportError.
  Completion parse_response(const std::string& body) const;

 private:
  HttpBackendConfig config_;
};

}  // namespace seedforge::llm
