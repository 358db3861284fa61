// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/prompts.hpp"
#include "qakit/rag_pipeline.hpp"
#include "test_support.hpp"

using namespace qakit;
using namespace qakit::rag;
using qakit::testing::error_kind;
using qakit::testing::make_pair;

namespace {

// Plain cosine over raw (unnormalized) vectors, then a stable sort.
std::vector<std::string> brute_force_top_k(const std::vector<std::vector<double>>& vectors,
                                           const std::vector<std::string>& ids, const std::vector<double>& q,
                                           std::size_t k) {
  std::vector<std::pair<double, std::string>> scored;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      dot += vectors[i][j] * q[j];
      na += vectors[i][j] * vectors[i][j];
      nb += q[j] * q[j];
    }
    scored.emplace_back(dot / std::sqrt(na * nb), ids[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<std::string> ids_of(const RetrievalResult& r) {
  std::vector<std::string> out;
  for (const auto& h : r.hits) out.push_back(h.chunk_id);
  return out;
}

std::vector<corpus::Chunk> chunks(std::size_t n) {
  std::vector<corpus::Chunk> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::Chunk c;
    c.doc_id = fmt::format("doc-{}", i / 2);
    c.chunk_id = fmt::format("{}#{:04d}", c.doc_id, i % 2);
    c.text = fmt::format("chunk {} talks about topic {} and cable {}", i, i % 3, i * 7);
    c.end_offset = c.text.size();
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(VectorIndex, QueryMatchesBruteForceOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n = 50, dim = 8;
    auto vectors = qakit::testing::random_unit_vectors(n, dim, seed);
    // Scale rows so normalization on insert matters.
    for (std::size_t i = 0; i < n; ++i)
      for (auto& x : vectors[i]) x *= 1.0 + static_cast<double>(i % 5);
    std::vector<std::string> ids;
    VectorIndex index(dim);
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back(fmt::format("c{:03d}", i));
      index.add({ids.back(), "d", "t"}, vectors[i]);
    }
    const auto q = qakit::testing::random_unit_vectors(1, dim, seed + 1000)[0];
    for (std::size_t k : {1u, 3u, 10u, 50u, 80u}) {
      const auto r = query_vector(index, q, k);
      EXPECT_EQ(r.hits.size(), std::min<std::size_t>(k, n));
      EXPECT_EQ(ids_of(r), brute_force_top_k(vectors, ids, q, k)) << "seed " << seed << " k " << k;
      for (std::size_t i = 1; i < r.hits.size(); ++i) EXPECT_GE(r.hits[i - 1].score, r.hits[i].score);
    }
  }
}

TEST(VectorIndex, TiesBreakByChunkId) {
  VectorIndex index(2);
  const std::vector<double> v{1.0, 1.0};
  index.add({"c3", "d", "x"}, v);
  index.add({"c1", "d", "x"}, v);
  index.add({"c2", "d", "x"}, std::vector<double>{2.0, 2.0});
  const std::vector<double> q{1.0, 0.0};
  EXPECT_EQ(ids_of(query_vector(index, q, 3)), (std::vector<std::string>{"c1", "c2", "c3"}));
}

TEST(VectorIndex, RejectsBadInputs) {
  VectorIndex index(3);
  index.add({"a", "d", "x"}, std::vector<double>{1, 0, 0});
  EXPECT_EQ(error_kind([&] { index.add({"a", "d", "x"}, std::vector<double>{0, 1, 0}); }), ErrorKind::Conflict);
  EXPECT_EQ(error_kind([&] { index.add({"b", "d", "x"}, std::vector<double>{0, 1}); }), ErrorKind::Internal);
  EXPECT_EQ(error_kind([&] { index.add({"c", "d", "x"}, std::vector<double>{0, 0, 0}); }), ErrorKind::Internal);
  const std::vector<double> q{1, 0, 0};
  EXPECT_EQ(error_kind([&] { query_vector(index, q, 0); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { query_vector(index, std::vector<double>{1, 0}, 1); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([] { VectorIndex(0); }), ErrorKind::Parameter);
}

TEST(VectorIndex, SaveLoadRoundTripAndStaleness) {
  qakit::testing::TempDir tmp;
  auto gw = qakit::testing::mock_gateway(16);
  const auto c = chunks(6);
  const auto index = build_index(c, *gw, "sha-corpus", 4);
  EXPECT_EQ(index.size(), 6u);
  EXPECT_EQ(index.dimension(), 16u);
  index.save(tmp / "index.json");

  const auto loaded = VectorIndex::load(tmp / "index.json", std::string("sha-corpus"));
  ASSERT_EQ(loaded.size(), index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    EXPECT_EQ(loaded.entry(i).chunk_id, index.entry(i).chunk_id);
    const auto a = index.vector(i), b = loaded.vector(i);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  EXPECT_EQ(query(loaded, "cable 14", 3, *gw).hits, query(index, "cable 14", 3, *gw).hits);
  EXPECT_EQ(error_kind([&] { VectorIndex::load(tmp / "index.json", std::string("other")); }), ErrorKind::Staleness);
  qakit::testing::write_file(tmp / "bad.json", "{\"format\":\"nope\"}");
  EXPECT_EQ(error_kind([&] { VectorIndex::load(tmp / "bad.json"); }), ErrorKind::Format);
}

TEST(VectorIndex, BuildIsIndependentOfBatchSize) {
  auto gw = qakit::testing::mock_gateway(16);
  const auto c = chunks(9);
  EXPECT_EQ(build_index(c, *gw, {}, 1).to_json(), build_index(c, *gw, {}, 64).to_json());
  EXPECT_EQ(error_kind([&] { build_index({}, *gw); }), ErrorKind::Parameter);
}

TEST(RegenerateDrag, KeepsQuestionsAndRewritesIds) {
  auto f = qakit::testing::hit_rate_fixture(10);
  std::vector<std::string> prompts_seen;
  std::mutex mutex;
  auto embed_gw = std::move(f.gateway);
  // Reuse the fixture's embeddings but answer through a scripted chat.
  auto chat_gw = qakit::testing::scripted_gateway(
      [&](const llm::ChatRequest& req) {
        std::lock_guard lock(mutex);
        prompts_seen.push_back(qakit::testing::prompt_of(req));
        return llm::ChatResponse{"  regenerated answer \n"};
      },
      [&](std::span<const std::string> texts) { return embed_gw->embed(texts); });

  RegenerationOptions opt;
  opt.created_at = "2024-05-01T00:00:00Z";
  const auto tmpl = prompts::asset(prompts::kRagAnswer).text;
  const auto r = regenerate_drag(f.pairs, *f.index, 2, tmpl, *chat_gw, opt);
  ASSERT_EQ(r.pairs.size(), f.pairs.size());
  EXPECT_TRUE(r.skipped.empty());
  EXPECT_EQ(prompts_seen.size(), f.pairs.size());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& out = r.pairs[i];
    EXPECT_EQ(out.pair_id, fmt::format("drag-{:06d}", i + 1));
    EXPECT_EQ(out.question, f.pairs[i].question);
    EXPECT_EQ(out.answer, "regenerated answer");
    EXPECT_EQ(out.method, Method::DRag);
    EXPECT_EQ(out.created_at, "2024-05-01T00:00:00Z");
    ASSERT_EQ(out.source_doc_ids.size(), 2u);
    EXPECT_EQ(out.source_doc_ids[0], f.pairs[i].source_doc_ids[0]);
  }
  EXPECT_EQ(f.pairs[0].method, Method::DNaive);
}

TEST(RegenerateDrag, SourceIdsAreDeduplicated) {
  VectorIndex index(2);
  index.add({"doc-a#0000", "doc-a", "first"}, std::vector<double>{1, 0});
  index.add({"doc-a#0001", "doc-a", "second"}, std::vector<double>{1, 0.1});
  index.add({"doc-b#0000", "doc-b", "third"}, std::vector<double>{0, 1});
  auto gw = qakit::testing::scripted_gateway(
      [](const llm::ChatRequest&) { return llm::ChatResponse{"x"}; },
      [](std::span<const std::string> texts) { return std::vector<llm::Embedding>(texts.size(), {1.0, 0.0}); });
  std::vector<QAPair> in{make_pair("dnaive-000001", "q", "a", Method::DNaive, {"doc-a"})};
  const auto r = regenerate_drag(in, index, 3, prompts::asset(prompts::kRagAnswer).text, *gw, {});
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].source_doc_ids, (std::vector<std::string>{"doc-a", "doc-b"}));
}

TEST(RegenerateDrag, EmptyAnswerIsSkipped) {
  auto f = qakit::testing::hit_rate_fixture(10);
  auto embed_gw = std::move(f.gateway);
  auto gw = qakit::testing::scripted_gateway(
      [](const llm::ChatRequest& req) {
        const bool blank = qakit::testing::prompt_of(req).find("question 3 ") != std::string::npos;
        return llm::ChatResponse{blank ? "   " : "ok"};
      },
      [&](std::span<const std::string> texts) { return embed_gw->embed(texts); });
  const auto r = regenerate_drag(f.pairs, *f.index, 1, prompts::asset(prompts::kRagAnswer).text, *gw, {});
  EXPECT_EQ(r.pairs.size(), 9u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].pair_id, "dnaive-000004");
}

TEST(RegenerateDrag, ParameterErrors) {
  auto f = qakit::testing::hit_rate_fixture(10);
  const auto tmpl = prompts::asset(prompts::kRagAnswer).text;
  EXPECT_EQ(error_kind([&] { regenerate_drag(f.pairs, *f.index, 0, tmpl, *f.gateway, {}); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { regenerate_drag(f.pairs, *f.index, 1, "no slots", *f.gateway, {}); }),
            ErrorKind::Parameter);
  auto mixed = f.pairs;
  mixed[4].method = Method::Manual;
  EXPECT_EQ(error_kind([&] { regenerate_drag(mixed, *f.index, 1, tmpl, *f.gateway, {}); }), ErrorKind::Parameter);
}

TEST(DragPairId, Mapping) {
  EXPECT_EQ(drag_pair_id("dnaive-000012"), "drag-000012");
  EXPECT_EQ(drag_pair_id("custom-7"), "drag-custom-7");
}

TEST(RetrievalHitRate, SevenOfTen) {
  auto f = qakit::testing::hit_rate_fixture(7);
  EXPECT_DOUBLE_EQ(retrieval_hit_rate(f.pairs, *f.index, 1, *f.gateway), 0.7);
  EXPECT_DOUBLE_EQ(retrieval_hit_rate(f.pairs, *f.index, 10, *f.gateway), 1.0);
}

TEST(RetrievalHitRate, ParameterErrors) {
  auto f = qakit::testing::hit_rate_fixture(7);
  EXPECT_EQ(error_kind([&] { retrieval_hit_rate({}, *f.index, 1, *f.gateway); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { retrieval_hit_rate(f.pairs, *f.index, 0, *f.gateway); }), ErrorKind::Parameter);
  auto multi = f.pairs;
  multi[0].source_doc_ids.push_back("doc-09");
  EXPECT_EQ(error_kind([&] { retrieval_hit_rate(multi, *f.index, 1, *f.gateway); }), ErrorKind::Parameter);
}

TEST(RenderContext, RankedBlocks) {
  VectorIndex index(2);
  index.add({"a#0", "a", "alpha text"}, std::vector<double>{1, 0});
  index.add({"b#0", "b", "beta text"}, std::vector<double>{0, 1});
  const auto r = query_vector(index, std::vector<double>{0.2, 1.0}, 2);
  EXPECT_EQ(render_context(index, r), "[1] beta text\n\n[2] alpha text");
}
