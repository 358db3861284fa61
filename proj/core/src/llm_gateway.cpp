// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/llm_gateway.hpp"

#include <algorithm>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/http_provider.hpp"
#include "qakit/mock_provider.hpp"
#include "qakit/replay_provider.hpp"

namespace qakit::llm {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

DimensionMismatch::DimensionMismatch(std::size_t index, std::size_t got, std::size_t expected)
    : Error(ErrorKind::Internal,
            fmt::format("embed: dimension disagreement in batch (vector {} has {}, expected {})", index,
                        got, expected)),
      index_(index) {}

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  raise(ErrorKind::MalformedPayload, fmt::format("unknown message role '{}'", name));
}

ChatRequest user_request(std::string provider_id, std::string model_id, std::string content,
                         std::optional<std::int64_t> seed) {
  ChatRequest r;
  r.provider_id = std::move(provider_id);
  r.model_id = std::move(model_id);
  r.messages.push_back({Role::User, std::move(content)});
  r.request_seed = seed;
  return r;
}

void validate(const ChatRequest& request) {
  if (request.messages.empty()) raise(ErrorKind::Parameter, "chat request has no messages");
  if (request.messages.back().role != Role::User)
    raise(ErrorKind::Parameter, "the last message of a chat request must have role 'user'");
  if (!(request.temperature >= 0.0))
    raise(ErrorKind::Parameter, "temperature must be non-negative");
}

void to_json(json& j, const ChatRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages)
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  j = json{{"provider_id", r.provider_id},
           {"model_id", r.model_id},
           {"messages", std::move(messages)},
           {"temperature", r.temperature},
           {"max_output_tokens", r.max_output_tokens},
           {"request_seed", r.request_seed ? json(*r.request_seed) : json(nullptr)}};
}

void from_json(const json& j, ChatRequest& r) {
  r.provider_id = j.value("provider_id", "");
  j.at("model_id").get_to(r.model_id);
  r.messages.clear();
  for (const auto& m : j.at("messages"))
    r.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  r.temperature = j.value("temperature", 0.0);
  r.max_output_tokens = j.value("max_output_tokens", std::size_t{1024});
  if (j.contains("request_seed") && !j["request_seed"].is_null())
    r.request_seed = j["request_seed"].get<std::int64_t>();
  else
    r.request_seed.reset();
}

void to_json(json& j, const ChatResponse& r) {
  j = json{{"content", r.content},
           {"prompt_tokens", r.prompt_tokens},
           {"completion_tokens", r.completion_tokens},
           {"latency_ms", r.latency_ms}};
}

void from_json(const json& j, ChatResponse& r) {
  j.at("content").get_to(r.content);
  r.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
  r.completion_tokens = j.value("completion_tokens", std::size_t{0});
  r.latency_ms = j.value("latency_ms", 0.0);
}

std::string request_fingerprint(const ChatRequest& request) {
  json j = request;
  j.erase("provider_id");
  return sha256_hex(j.dump());
}

std::string embed_fingerprint(std::span<const std::string> texts) {
  json j = {{"texts", texts}};
  return sha256_hex(j.dump());
}

void to_json(json& j, const ProviderConfig& c) {
  j = json{{"kind", c.kind},
           {"endpoint", c.endpoint},
           {"credential_env_var", c.credential_env_var},
           {"max_concurrent", c.max_concurrent},
           {"max_retries", c.max_retries},
           {"backoff_initial_ms", c.backoff.initial.count()},
           {"backoff_multiplier", c.backoff.multiplier},
           {"backoff_max_ms", c.backoff.max_delay.count()},
           {"timeout_ms", c.timeout.count()},
           {"embedding_model", c.embedding_model},
           {"embedding_dimension", c.embedding_dimension}};
  j["requests_per_minute"] = c.requests_per_minute ? json(*c.requests_per_minute) : json(nullptr);
  if (!c.transcript_path.empty()) j["transcript_path"] = c.transcript_path.generic_string();
}

void from_json(const json& j, ProviderConfig& c) {
  c.kind = j.value("kind", std::string("mock"));
  c.endpoint = j.value("endpoint", std::string());
  c.credential_env_var = j.value("credential_env_var", std::string());
  c.max_concurrent = j.value("max_concurrent", std::size_t{4});
  c.max_retries = j.value("max_retries", std::size_t{3});
  c.backoff.initial = std::chrono::milliseconds(j.value("backoff_initial_ms", 500));
  c.backoff.multiplier = j.value("backoff_multiplier", 2.0);
  c.backoff.max_delay = std::chrono::milliseconds(j.value("backoff_max_ms", 30'000));
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60'000));
  c.embedding_model = j.value("embedding_model", std::string());
  c.embedding_dimension = j.value("embedding_dimension", std::size_t{64});
  if (j.contains("requests_per_minute") && !j["requests_per_minute"].is_null())
    c.requests_per_minute = j["requests_per_minute"].get<double>();
  if (j.contains("transcript_path")) c.transcript_path = j["transcript_path"].get<std::string>();
  if (j.contains("credential") || j.contains("api_key"))
    raise(ErrorKind::Parameter,
          "credentials are read from the environment only; set credential_env_var instead");
  if (c.max_concurrent < 1) raise(ErrorKind::Parameter, "max_concurrent must be at least 1");
  if (c.backoff.multiplier < 1.0) raise(ErrorKind::Parameter, "backoff_multiplier must be >= 1");
  if (c.requests_per_minute && !(*c.requests_per_minute > 0.0))
    raise(ErrorKind::Parameter, "requests_per_minute must be positive");
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config) {
  if (config.kind == "mock") return std::make_unique<MockProvider>(config.embedding_dimension);
  if (config.kind == "openai_compatible") return std::make_unique<HttpProvider>(config);
  if (config.kind == "replay") return std::make_unique<ReplayProvider>(config.transcript_path);
  raise(ErrorKind::Parameter,
        fmt::format("unknown provider kind '{}' (supported: mock, openai_compatible, replay)",
                    config.kind));
}

TranscriptLog::TranscriptLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) raise(ErrorKind::Io, "cannot open transcript " + path.string());
}

void TranscriptLog::append(const json& entry) {
  std::lock_guard lock(mutex_);
  out_ << entry.dump() << '\n';
  out_.flush();
}

void TranscriptLog::record_chat(std::string_view provider_id, const ChatRequest& request,
                                const ChatResponse& response) {
  append({{"type", "chat"},
          {"provider_id", provider_id},
          {"fingerprint", request_fingerprint(request)},
          {"request", request},
          {"response", response}});
}

void TranscriptLog::record_embed(std::string_view provider_id, std::span<const std::string> texts,
                                 std::span<const Embedding> vectors) {
  append({{"type", "embed"},
          {"provider_id", provider_id},
          {"fingerprint", embed_fingerprint(texts)},
          {"texts", texts},
          {"vectors", vectors}});
}

struct Gateway::Slot {
  std::string id;
  ProviderConfig config;
  std::unique_ptr<Provider> provider;
  std::mutex mutex;
  std::condition_variable cv;
  std::size_t in_flight = 0;
  Clock::time_point next_start{};
};

namespace {

bool retryable(ErrorKind kind) { return kind == ErrorKind::RateLimit || kind == ErrorKind::Timeout; }

}  // namespace

Gateway::Gateway() : sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}
Gateway::~Gateway() = default;

void Gateway::add_provider(const std::string& id, ProviderConfig config,
                           std::unique_ptr<Provider> provider) {
  if (!provider) raise(ErrorKind::Parameter, "provider '" + id + "' is null");
  if (config.max_concurrent < 1) raise(ErrorKind::Parameter, "max_concurrent must be at least 1");
  auto s = std::make_unique<Slot>();
  s->id = id;
  s->config = std::move(config);
  s->provider = std::move(provider);
  slots_[id] = std::move(s);
  if (embedding_provider_.empty()) embedding_provider_ = id;
}

void Gateway::add_provider(const std::string& id, ProviderConfig config) {
  auto provider = make_provider(config);
  add_provider(id, std::move(config), std::move(provider));
}

bool Gateway::has_provider(std::string_view id) const { return slots_.find(id) != slots_.end(); }

const ProviderConfig& Gateway::config(std::string_view id) const { return slot(id).config; }

Gateway::Slot& Gateway::slot(std::string_view id) const {
  auto it = slots_.find(id);
  if (it == slots_.end()) raise(ErrorKind::Parameter, fmt::format("unknown provider '{}'", id));
  return *it->second;
}

void Gateway::set_embedding_provider(std::string id) {
  slot(id);
  embedding_provider_ = std::move(id);
}

void Gateway::set_transcript(std::shared_ptr<TranscriptLog> log) { transcript_ = std::move(log); }

void Gateway::set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

template <typename Fn>
auto Gateway::with_retries(Slot& s, std::string_view what, Fn&& fn) -> decltype(fn()) {
  auto delay = s.config.backoff.initial;
  for (std::size_t attempt = 1;; ++attempt) {
    try {
      {
        std::unique_lock lock(s.mutex);
        s.cv.wait(lock, [&] { return s.in_flight < s.config.max_concurrent; });
        ++s.in_flight;
      }
      struct Release {
        Slot& s;
        ~Release() {
          {
            std::lock_guard lock(s.mutex);
            --s.in_flight;
          }
          s.cv.notify_one();
        }
      } release{s};

      if (s.config.requests_per_minute) {
        const auto interval = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(60.0 / *s.config.requests_per_minute));
        Clock::time_point start;
        const auto now = Clock::now();
        {
          std::lock_guard lock(s.mutex);
          start = std::max(now, s.next_start);
          s.next_start = start + interval;
        }
        if (start > now)
          sleeper_(std::chrono::ceil<std::chrono::milliseconds>(start - now));
      }
      return fn();
    } catch (const Error& e) {
      if (!retryable(e.kind())) throw;
      if (attempt > s.config.max_retries) {
        const auto label = e.kind() == ErrorKind::RateLimit ? "rate limit exhausted" : "timed out";
        throw Error(e.kind(), fmt::format("{}: provider '{}' {} after {} attempts: {}", what, s.id,
                                          label, attempt, e.what()));
      }
      spdlog::debug("{}: provider '{}' attempt {} failed ({}); retrying in {} ms", what, s.id,
                    attempt, e.what(), delay.count());
      sleeper_(delay);
      const auto next = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(delay.count()) * s.config.backoff.multiplier));
      delay = std::min(next, s.config.backoff.max_delay);
    }
  }
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  validate(request);
  auto& s = slot(request.provider_id);
  auto response = with_retries(s, "complete", [&] {
    const auto t0 = Clock::now();
    auto r = s.provider->complete(request);
    r.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return r;
  });
  if (transcript_) transcript_->record_chat(s.id, request, response);
  return response;
}

std::vector<Embedding> Gateway::embed(std::span<const std::string> texts) {
  if (embedding_provider_.empty()) raise(ErrorKind::Parameter, "no embedding provider configured");
  return embed(embedding_provider_, texts);
}

std::vector<Embedding> Gateway::embed(std::string_view provider_id,
                                      std::span<const std::string> texts) {
  if (texts.empty()) return {};
  for (std::size_t i = 0; i < texts.size(); ++i)
    if (texts[i].empty()) raise(ErrorKind::Parameter, fmt::format("embed: text {} is empty", i));
  auto& s = slot(provider_id);
  auto vectors = with_retries(s, "embed", [&] { return s.provider->embed(texts); });
  if (vectors.size() != texts.size())
    raise(ErrorKind::MalformedPayload,
          fmt::format("embed: provider '{}' returned {} vectors for {} texts", s.id, vectors.size(),
                      texts.size()));
  const auto dim = vectors.front().size();
  for (std::size_t i = 0; i < vectors.size(); ++i)
    if (vectors[i].size() != dim || dim == 0)
      throw DimensionMismatch(i, vectors[i].size(), dim);
  if (transcript_) transcript_->record_embed(s.id, texts, vectors);
  return vectors;
}

}  // namespace qakit::llm
