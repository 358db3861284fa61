// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/llm_gateway.hpp"

namespace qakit::llm {

/// Adapter for endpoints speaking the chat-completions wire shape
/// (POST {endpoint}/chat/completions and {endpoint}/embeddings). OpenAI,
/// Gemini's compatibility endpoint and vLLM-served models such as
/// Prometheus all accept it.
///
/// Status mapping: 401/403 -> Auth; 429 -> RateLimit; 408, 5xx and transport
/// failures -> Timeout (both retried by the gateway); other 4xx -> Parameter;
/// unparseable bodies -> MalformedPayload.
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<Embedding> embed(std::span<const std::string> texts) override;

  static nlohmann::json chat_body(const ChatRequest& request);
  static ChatResponse parse_chat_response(const std::string& body);
  static std::vector<Embedding> parse_embedding_response(const std::string& body, std::size_t expected);

 private:
  std::string post(const std::string& route, const nlohmann::json& body);

  ProviderConfig config_;
  std::string origin_;
  std::string base_path_;
};

}  // namespace qakit::llm
