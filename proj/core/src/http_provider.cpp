// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/http_provider.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>

#include "qakit/errors.hpp"

namespace qakit::llm {

using json = nlohmann::json;

namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    raise(ErrorKind::Parameter, fmt::format("endpoint '{}' has no scheme", endpoint));
  const auto path = endpoint.find('/', scheme + 3);
  if (path == std::string::npos) return {endpoint, ""};
  auto base = endpoint.substr(path);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {endpoint.substr(0, path), base};
}

std::string excerpt(const std::string& body) {
  return body.size() > 200 ? body.substr(0, 200) + "..." : body;
}

}  // namespace

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) raise(ErrorKind::Parameter, "openai_compatible provider needs an endpoint");
  std::tie(origin_, base_path_) = split_endpoint(config_.endpoint);
}

json HttpProvider::chat_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages)
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json body = {{"model", request.model_id},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output_tokens}};
  if (request.request_seed) body["seed"] = *request.request_seed;
  return body;
}

ChatResponse HttpProvider::parse_chat_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    raise(ErrorKind::MalformedPayload, "chat response is not JSON: " + excerpt(body));
  }
  const auto* content = [&]() -> const json* {
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return nullptr;
    const auto& first = j["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content")) return nullptr;
    const auto& c = first["message"]["content"];
    return c.is_string() ? &c : nullptr;
  }();
  if (!content) raise(ErrorKind::MalformedPayload, "chat response lacks choices[0].message.content");

  ChatResponse r;
  r.content = content->get<std::string>();
  if (j.contains("usage") && j["usage"].is_object()) {
    r.prompt_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
    r.completion_tokens = j["usage"].value("completion_tokens", std::size_t{0});
  }
  r.provider_echo = json::object();
  for (const char* key : {"id", "model", "usage"})
    if (j.contains(key)) r.provider_echo[key] = j[key];
  return r;
}

std::vector<Embedding> HttpProvider::parse_embedding_response(const std::string& body,
                                                              std::size_t expected) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    raise(ErrorKind::MalformedPayload, "embedding response is not JSON: " + excerpt(body));
  }
  if (!j.contains("data") || !j["data"].is_array())
    raise(ErrorKind::MalformedPayload, "embedding response lacks a data array");
  std::vector<std::pair<std::size_t, Embedding>> rows;
  for (const auto& item : j["data"]) {
    if (!item.contains("embedding") || !item["embedding"].is_array())
      raise(ErrorKind::MalformedPayload, "embedding item lacks an embedding array");
    rows.emplace_back(item.value("index", rows.size()), item["embedding"].get<Embedding>());
  }
  if (rows.size() != expected)
    raise(ErrorKind::MalformedPayload,
          fmt::format("embedding response has {} items for {} inputs", rows.size(), expected));
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Embedding> out;
  out.reserve(rows.size());
  for (auto& [_, v] : rows) out.push_back(std::move(v));
  return out;
}

std::string HttpProvider::post(const std::string& route, const json& body) {
  httplib::Headers headers;
  if (!config_.credential_env_var.empty()) {
    const char* key = std::getenv(config_.credential_env_var.c_str());
    if (key == nullptr || *key == '\0')
      raise(ErrorKind::Auth, fmt::format("credential environment variable {} is not set",
                                         config_.credential_env_var));
    headers.emplace("Authorization", fmt::format("Bearer {}", key));
  }

  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const auto path = base_path_ + route;
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res)
    raise(ErrorKind::Timeout, fmt::format("POST {}{} failed: {}", origin_, path, httplib::to_string(res.error())));

  const int status = res->status;
  if (status == 401 || status == 403)
    raise(ErrorKind::Auth, fmt::format("provider refused credentials (HTTP {})", status));
  if (status == 429) raise(ErrorKind::RateLimit, "provider throttled the request (HTTP 429)");
  if (status == 408 || status >= 500)
    raise(ErrorKind::Timeout, fmt::format("provider unavailable (HTTP {})", status));
  if (status >= 400)
    raise(ErrorKind::Parameter,
          fmt::format("provider rejected the request (HTTP {}): {}", status, excerpt(res->body)));
  return res->body;
}

ChatResponse HttpProvider::complete(const ChatRequest& request) {
  return parse_chat_response(post("/chat/completions", chat_body(request)));
}

std::vector<Embedding> HttpProvider::embed(std::span<const std::string> texts) {
  json body = {{"model", config_.embedding_model}, {"input", texts}};
  return parse_embedding_response(post("/embeddings", body), texts.size());
}

}  // namespace qakit::llm
