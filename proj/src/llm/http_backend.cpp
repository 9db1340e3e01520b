// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include "seedforge/common/error.hpp"
#include "seedforge/llm/backend.hpp"

namespace seedforge::llm {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

nlohmann::json HttpBackend::request_body(const Dialogue& dialogue, const Decoding& decoding) const {
  auto messages = nlohmann::json::array();
  for (const auto& turn : dialogue.turns()) {
    messages.push_back({{"role", std::string(to_string(turn.role))}, {"content", turn.text}});
  }
  return {{"model", config_.model},
          {"messages", messages},
          {"temperature", decoding.temperature},
          {"max_tokens", decoding.max_tokens}};
}

Completion HttpBackend::parse_response(const std::string& body) const {
  try {
    auto json = nlohmann::json::parse(body);
    Completion completion;
    const auto& message = json.at("choices").at(0).at("message");
    if (message.contains("content") && message["content"].is_string()) {
      completion.text = message["content"].get<std::string>();
    }
    completion.model_id = config_.model;
    if (json.contains("usage")) {
      const auto& usage = json["usage"];
      completion.prompt_tokens = usage.value("prompt_tokens", std::uint64_t{0});
      completion.completion_tokens = usage.value("completion_tokens", std::uint64_t{0});
    }
    return completion;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::TransportError, std::string("malformed completion response: ") + e.what());
  }
}

Completion HttpBackend::complete(const Dialogue& dialogue, const Decoding& decoding) {
  dialogue.validate_for_submit();
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto result = client.Post(config_.path, headers, request_body(dialogue, decoding).dump(),
                            "application/json");
  if (!result) {
    throw Error(ErrorKind::TransportError, "request failed: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw Error(ErrorKind::TransportError,
                "HTTP " + std::to_string(result->status) + ": " + result->body.substr(0, 512));
  }
  return parse_response(result->body);
}

}  // namespace seedforge::llm
