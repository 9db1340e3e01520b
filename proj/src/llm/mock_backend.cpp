// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "seedforge/common/error.hpp"
#include "seedforge/common/util.hpp"
#include "seedforge/llm/backend.hpp"

namespace seedforge::llm {

MockBackend::MockBackend(std::vector<MockRecord> records, Mode mode, bool repeat_last, std::string model)
    : records_(std::move(records)), mode_(mode), repeat_last_(repeat_last), model_(std::move(model)) {}

MockBackend::MockBackend(MockBackend&& other) noexcept
    : records_(std::move(other.records_)),
      mode_(other.mode_),
      repeat_last_(other.repeat_last_),
      model_(std::move(other.model_)),
      cursor_(other.cursor_),
      kind_cursor_(std::move(other.kind_cursor_)),
      served_(std::move(other.served_)) {}

MockBackend MockBackend::from_json(const nlohmann::json& script) {
  std::vector<MockRecord> records;
  for (const auto& entry : script.at("responses")) {
    auto kind_id = entry.at("kind").get<std::string>();
    auto kind = prompt_kind_from_string(kind_id);
    if (!kind) throw Error(ErrorKind::UnknownTemplate, kind_id);
    MockRecord record{*kind, entry.at("reply").get<std::string>(), std::nullopt, std::nullopt};
    if (entry.contains("prompt_tokens")) record.prompt_tokens = entry["prompt_tokens"].get<std::uint64_t>();
    if (entry.contains("completion_tokens")) {
      record.completion_tokens = entry["completion_tokens"].get<std::uint64_t>();
    }
    records.push_back(std::move(record));
  }
  auto mode_name = script.value("mode", std::string("sequential"));
  Mode mode;
  if (mode_name == "sequential") {
    mode = Mode::Sequential;
  } else if (mode_name == "by_kind") {
    mode = Mode::ByKind;
  } else {
    throw Error(ErrorKind::ConfigError, "unknown mock mode '" + mode_name + "'");
  }
  return MockBackend(std::move(records), mode, script.value("repeat_last", false),
                     script.value("model", std::string("mock")));
}

MockBackend MockBackend::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path), nullptr, true, /*ignore_comments=*/true));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, "mock script " + path.string() + ": " + e.what());
  }
}

const MockRecord* MockBackend::peek(PromptKind kind) const {
  if (mode_ == Mode::Sequential) {
    return cursor_ < records_.size() ? &records_[cursor_] : nullptr;
  }
  auto it = kind_cursor_.find(kind);
  std::size_t wanted = it == kind_cursor_.end() ? 0 : it->second;
  const MockRecord* last = nullptr;
  std::size_t seen = 0;
  for (const auto& record : records_) {
    if (record.kind != kind) continue;
    if (seen++ == wanted) return &record;
    last = &record;
  }
  return repeat_last_ ? last : nullptr;
}

Completion MockBackend::complete(const Dialogue& dialogue, const Decoding& decoding) {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto kind = dialogue.last_user_kind();
  const MockRecord* record = peek(kind);
  if (record == nullptr) {
    throw Error(ErrorKind::TransportError,
                "mock script exhausted at " + std::string(to_string(kind)) + " call");
  }
  if (record->kind != kind) {
    throw Error(ErrorKind::MockScriptMismatch, "expected " + std::string(to_string(record->kind)) +
                                                   ", got " + std::string(to_string(kind)));
  }
  if (mode_ == Mode::Sequential) {
    ++cursor_;
  } else {
    ++kind_cursor_[kind];
  }
  ++served_[kind];

  Completion completion;
  completion.text = record->reply;
  completion.model_id = model_;
  completion.prompt_tokens = record->prompt_tokens.value_or(estimate_tokens(dialogue));
  completion.completion_tokens = std::min<std::uint64_t>(
      record->completion_tokens.value_or(estimate_tokens(record->reply)), decoding.max_tokens);
  return completion;
}

std::uint64_t MockBackend::estimate_prompt_tokens(const Dialogue& dialogue) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const MockRecord* record = dialogue.empty() ? nullptr : peek(dialogue.last_user_kind());
  if (record != nullptr && record->prompt_tokens) return *record->prompt_tokens;
  return estimate_tokens(dialogue);
}

nlohmann::json MockBackend::save_state() const {
  std::lock_guard<std::mutex> lock(mutex_);
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [kind, index] : kind_cursor_) kinds[std::string(to_string(kind))] = index;
  nlohmann::json served = nlohmann::json::object();
  for (const auto& [kind, count] : served_) served[std::string(to_string(kind))] = count;
  return {{"cursor", cursor_}, {"kind_cursor", kinds}, {"served", served}};
}

void MockBackend::load_state(const nlohmann::json& state) {
  if (state.is_null()) return;
  std::lock_guard<std::mutex> lock(mutex_);
  cursor_ = state.at("cursor").get<std::size_t>();
  kind_cursor_.clear();
  served_.clear();
  for (const auto& [id, index] : state.at("kind_cursor").items()) {
    auto kind = prompt_kind_from_string(id);
    if (!kind) throw Error(ErrorKind::CorruptState, "unknown prompt kind " + id);
    kind_cursor_[*kind] = index.get<std::size_t>();
  }
  for (const auto& [id, count] : state.at("served").items()) {
    auto kind = prompt_kind_from_string(id);
    if (!kind) throw Error(ErrorKind::CorruptState, "unknown prompt kind " + id);
    served_[*kind] = count.get<std::size_t>();
  }
}

std::size_t MockBackend::calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::size_t total = 0;
  for (const auto& [kind, count] : served_) total += count;
  return total;
}

std::size_t MockBackend::calls(PromptKind kind) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = served_.find(kind);
  return it == served_.end() ? 0 : it->second;
}

}  // namespace seedforge::llm
