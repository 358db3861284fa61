// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/errors.hpp"

namespace qakit::llm {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role) noexcept;
Role parse_role(std::string_view name);

struct Message {
  Role role = Role::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct ChatRequest {
  std::string provider_id;
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::size_t max_output_tokens = 1024;
  std::optional<std::int64_t> request_seed;
};

struct ChatResponse {
  std::string content;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double latency_ms = 0.0;
  nlohmann::json provider_echo;
};

using Embedding = std::vector<double>;

/// Raised (kind Internal) when an embedding batch mixes dimensions;
/// `index` is the position of the first offending vector.
class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t index, std::size_t got, std::size_t expected);
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Convenience: a one-message user request.
ChatRequest user_request(std::string provider_id, std::string model_id, std::string content,
                         std::optional<std::int64_t> seed = std::nullopt);

/// Throws a Parameter error when messages are empty, the last message is not
/// from the user, or the temperature is negative.
void validate(const ChatRequest& request);

void to_json(nlohmann::json& j, const ChatRequest& r);
void from_json(const nlohmann::json& j, ChatRequest& r);
void to_json(nlohmann::json& j, const ChatResponse& r);
void from_json(const nlohmann::json& j, ChatResponse& r);

/// Stable digest of a request's content (model, messages, temperature,
/// token cap, seed). Provider id is excluded so transcripts replay against
/// any provider name.
std::string request_fingerprint(const ChatRequest& request);
std::string embed_fingerprint(std::span<const std::string> texts);

struct BackoffPolicy {
  std::chrono::milliseconds initial{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30'000};
};

struct ProviderConfig {
  /// "mock", "openai_compatible" or "replay".
  std::string kind = "mock";
  std::string endpoint;
  std::string credential_env_var;
  std::size_t max_concurrent = 4;
  std::size_t max_retries = 3;
  BackoffPolicy backoff;
  std::optional<double> requests_per_minute;
  std::chrono::milliseconds timeout{60'000};
  std::string embedding_model;
  std::size_t embedding_dimension = 64;
  /// Transcript consulted by the replay provider.
  std::filesystem::path transcript_path;
};

void to_json(nlohmann::json& j, const ProviderConfig& c);
void from_json(const nlohmann::json& j, ProviderConfig& c);

/// A backend. Implementations signal retryable failures by throwing
/// qakit::Error with kind RateLimit or Timeout; any other error is final.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
};

std::unique_ptr<Provider> make_provider(const ProviderConfig& config);

/// Append-only JSON-Lines record of every call through a gateway.
class TranscriptLog {
 public:
  explicit TranscriptLog(const std::filesystem::path& path);

  void record_chat(std::string_view provider_id, const ChatRequest& request,
                   const ChatResponse& response);
  void record_embed(std::string_view provider_id, std::span<const std::string> texts,
                    std::span<const Embedding> vectors);

 private:
  void append(const nlohmann::json& entry);

  std::mutex mutex_;
  std::ofstream out_;
};

/// Routes requests to named providers. Each provider gets its own bound on
/// in-flight calls, a request-rate floor, and a retry/backoff policy. Safe
/// for concurrent callers.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway();
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void add_provider(const std::string& id, ProviderConfig config,
                    std::unique_ptr<Provider> provider);
  /// Builds the provider from its config via make_provider().
  void add_provider(const std::string& id, ProviderConfig config);
  bool has_provider(std::string_view id) const;
  const ProviderConfig& config(std::string_view id) const;

  void set_embedding_provider(std::string id);
  const std::string& embedding_provider() const noexcept { return embedding_provider_; }

  void set_transcript(std::shared_ptr<TranscriptLog> log);
  /// Replaces the sleep used between retries and for rate limiting.
  void set_sleeper(Sleeper sleeper);

  ChatResponse complete(const ChatRequest& request);

  /// Embeds through the default embedding provider.
  std::vector<Embedding> embed(std::span<const std::string> texts);
  std::vector<Embedding> embed(std::string_view provider_id, std::span<const std::string> texts);

 private:
  struct Slot;

  Slot& slot(std::string_view id) const;
  template <typename Fn>
  auto with_retries(Slot& s, std::string_view what, Fn&& fn) -> decltype(fn());

  std::map<std::string, std::unique_ptr<Slot>, std::less<>> slots_;
  std::string embedding_provider_;
  std::shared_ptr<TranscriptLog> transcript_;
  Sleeper sleeper_;
};

}  // namespace qakit::llm
