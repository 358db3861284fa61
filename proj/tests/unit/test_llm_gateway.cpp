// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>
#include <thread>

#include <gtest/gtest.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/llm_gateway.hpp"
#include "qakit/mock_provider.hpp"
#include "qakit/parallel.hpp"
#include "qakit/replay_provider.hpp"
#include "test_support.hpp"

using namespace qakit;
using namespace qakit::llm;
using qakit::testing::ScriptedProvider;

namespace {

ChatRequest hello(std::string provider = "p") { return user_request(std::move(provider), "m", "hello there", 3); }

struct SleepLog {
  std::mutex mutex;
  std::vector<std::chrono::milliseconds> delays;
  Gateway::Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) {
      std::lock_guard lock(mutex);
      delays.push_back(d);
    };
  }
};

}  // namespace

TEST(MockProvider, RepliesArePureFunctionsOfTheRequest) {
  auto a = hello("mock");
  auto b = hello("mock");
  EXPECT_EQ(mock_reply(a), mock_reply(b));
  b.request_seed = 4;
  EXPECT_NE(mock_reply(a), mock_reply(b));
}

TEST(MockProvider, EmbeddingsAreUnitNormAndDeterministic) {
  const auto v = mock_embedding("patch panel cabling", 64);
  ASSERT_EQ(v.size(), 64u);
  double norm = 0;
  for (double x : v) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(v, mock_embedding("patch panel cabling", 64));
  EXPECT_NE(v, mock_embedding("cooling loop", 64));
}

TEST(MockProvider, ConceptualHeuristicOnExemplars) {
  EXPECT_TRUE(looks_conceptual("What is a patch panel?"));
  EXPECT_FALSE(looks_conceptual("How many racks does the Dallas facility hold?"));
}

TEST(Gateway, ValidatesRequests) {
  auto gw = qakit::testing::mock_gateway();
  ChatRequest r;
  r.provider_id = "mock";
  r.model_id = "m";
  EXPECT_THROW(gw->complete(r), Error);
  r.messages.push_back({Role::Assistant, "x"});
  EXPECT_THROW(gw->complete(r), Error);
  EXPECT_THROW(gw->complete(user_request("nobody", "m", "hi")), Error);
}

TEST(Gateway, RetriesRateLimitsWithExponentialBackoff) {
  std::atomic<int> calls{0};
  Gateway gw;
  ProviderConfig cfg;
  cfg.max_retries = 3;
  cfg.backoff.initial = std::chrono::milliseconds(100);
  cfg.backoff.multiplier = 2.0;
  gw.add_provider("p", cfg, std::make_unique<ScriptedProvider>([&](const ChatRequest&) -> ChatResponse {
                    if (++calls <= 2) throw Error(ErrorKind::RateLimit, "429");
                    return ChatResponse{"ok"};
                  }));
  SleepLog log;
  gw.set_sleeper(log.sleeper());
  EXPECT_EQ(gw.complete(hello()).content, "ok");
  EXPECT_EQ(calls.load(), 3);
  ASSERT_EQ(log.delays.size(), 2u);
  EXPECT_EQ(log.delays[0].count(), 100);
  EXPECT_EQ(log.delays[1].count(), 200);
}

TEST(Gateway, ExhaustedRetriesNameTheRateLimit) {
  std::atomic<int> calls{0};
  Gateway gw;
  ProviderConfig cfg;
  cfg.max_retries = 2;
  gw.add_provider("p", cfg, std::make_unique<ScriptedProvider>([&](const ChatRequest&) -> ChatResponse {
                    ++calls;
                    throw Error(ErrorKind::RateLimit, "429");
                  }));
  SleepLog log;
  gw.set_sleeper(log.sleeper());
  try {
    gw.complete(hello());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RateLimit);
    EXPECT_NE(std::string(e.what()).find("rate limit exhausted after 3 attempts"), std::string::npos);
  }
  EXPECT_EQ(calls.load(), 3);
}

TEST(Gateway, BackoffIsCappedAtMaxDelay) {
  Gateway gw;
  ProviderConfig cfg;
  cfg.max_retries = 5;
  cfg.backoff.initial = std::chrono::milliseconds(400);
  cfg.backoff.multiplier = 3.0;
  cfg.backoff.max_delay = std::chrono::milliseconds(1000);
  gw.add_provider("p", cfg, std::make_unique<ScriptedProvider>([](const ChatRequest&) -> ChatResponse {
                    throw Error(ErrorKind::Timeout, "slow");
                  }));
  SleepLog log;
  gw.set_sleeper(log.sleeper());
  EXPECT_THROW(gw.complete(hello()), Error);
  ASSERT_EQ(log.delays.size(), 5u);
  EXPECT_EQ(log.delays[0].count(), 400);
  EXPECT_EQ(log.delays[1].count(), 1000);
  EXPECT_EQ(log.delays[4].count(), 1000);
}

TEST(Gateway, NonRetryableErrorsSurfaceImmediately) {
  std::atomic<int> calls{0};
  auto gw = qakit::testing::scripted_gateway(
      [&](const ChatRequest&) -> ChatResponse {
        ++calls;
        throw Error(ErrorKind::Auth, "bad key");
      },
      {}, "p");
  try {
    gw->complete(hello());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Auth);
  }
  EXPECT_EQ(calls.load(), 1);
}

TEST(Gateway, InFlightCallsNeverExceedMaxConcurrent) {
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  Gateway gw;
  ProviderConfig cfg;
  cfg.max_concurrent = 3;
  gw.add_provider("p", cfg, std::make_unique<ScriptedProvider>([&](const ChatRequest&) {
                    const int now = ++in_flight;
                    int prev = peak.load();
                    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
                    }
                    std::this_thread::sleep_for(std::chrono::milliseconds(5));
                    --in_flight;
                    return ChatResponse{"ok"};
                  }));
  parallel_map<int>(40, 12, [&](std::size_t) {
    gw.complete(hello());
    return 0;
  });
  EXPECT_LE(peak.load(), 3);
  EXPECT_GE(peak.load(), 2);
}

TEST(Gateway, RequestsPerMinuteSpacesCalls) {
  Gateway gw;
  ProviderConfig cfg;
  cfg.requests_per_minute = 600.0;  // one call per 100 ms
  cfg.max_concurrent = 1;
  gw.add_provider("p", cfg, std::make_unique<ScriptedProvider>([](const ChatRequest&) { return ChatResponse{"ok"}; }));
  SleepLog log;
  gw.set_sleeper(log.sleeper());
  for (int i = 0; i < 4; ++i) gw.complete(hello());
  // The sleeper is a no-op, so every call after the first asks to wait.
  ASSERT_EQ(log.delays.size(), 3u);
  for (auto d : log.delays) {
    EXPECT_GT(d.count(), 0);
    EXPECT_LE(d.count(), 300);
  }
}

TEST(Gateway, EmbedChecksCountsAndDimensions) {
  auto gw = qakit::testing::scripted_gateway(
      [](const ChatRequest&) { return ChatResponse{}; },
      [](std::span<const std::string> texts) {
        std::vector<Embedding> out;
        for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(Embedding(i == 2 ? 3 : 4, 0.5));
        return out;
      },
      "p");
  const std::vector<std::string> two{"a", "b"};
  EXPECT_EQ(gw->embed(two).size(), 2u);
  EXPECT_TRUE(gw->embed(std::vector<std::string>{}).empty());
  const std::vector<std::string> three{"a", "b", "c"};
  try {
    gw->embed(three);
    FAIL();
  } catch (const DimensionMismatch& e) {
    EXPECT_EQ(e.index(), 2u);
  }
  const std::vector<std::string> with_empty{"a", ""};
  EXPECT_THROW(gw->embed(with_empty), Error);
}

TEST(Gateway, TranscriptReplaysWithoutTheLiveProvider) {
  qakit::testing::TempDir dir;
  const auto path = dir / "transcript.jsonl";
  std::vector<std::string> replies;
  std::vector<Embedding> vectors;
  const std::vector<std::string> texts{"cooling loop", "fiber tray"};
  {
    auto gw = qakit::testing::mock_gateway();
    gw->set_transcript(std::make_shared<TranscriptLog>(path));
    for (int seed = 0; seed < 3; ++seed) {
      replies.push_back(gw->complete(user_request("mock", "m", "Explain the cage partition", seed)).content);
    }
    vectors = gw->embed(texts);
  }
  ProviderConfig cfg;
  cfg.kind = "replay";
  cfg.transcript_path = path;
  Gateway replay;
  replay.add_provider("recorded", cfg);
  for (int seed = 0; seed < 3; ++seed) {
    EXPECT_EQ(replay.complete(user_request("recorded", "m", "Explain the cage partition", seed)).content,
              replies[seed]);
  }
  EXPECT_EQ(replay.embed(texts), vectors);
  try {
    replay.complete(user_request("recorded", "m", "never asked", 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotFound);
  }
}

TEST(ProviderConfig, CredentialsMustComeFromTheEnvironment) {
  EXPECT_THROW((json{{"kind", "openai_compatible"}, {"api_key", "sk-123"}}.get<ProviderConfig>()), Error);
  const auto cfg = json{{"kind", "openai_compatible"},
                        {"endpoint", "http://127.0.0.1:9/v1"},
                        {"credential_env_var", "QAKIT_TEST_KEY"},
                        {"max_retries", 1},
                        {"backoff_initial_ms", 5}}
                       .get<ProviderConfig>();
  EXPECT_EQ(cfg.credential_env_var, "QAKIT_TEST_KEY");
  EXPECT_EQ(cfg.max_retries, 1u);
  EXPECT_EQ(cfg.backoff.initial.count(), 5);
}
