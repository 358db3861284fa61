// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <set>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/qa_generation.hpp"
#include "qakit/text.hpp"
#include "test_support.hpp"

using namespace qakit;
using namespace qakit::generation;
using qakit::testing::error_kind;
using qakit::testing::make_pair;

namespace {

std::vector<corpus::Document> docs(std::size_t n) {
  std::vector<corpus::Document> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::Document d;
    d.doc_id = fmt::format("doc-{:02d}", i);
    d.source_uri = d.doc_id + ".txt";
    d.title = fmt::format("Facility {}", i);
    d.body = fmt::format(
        "Facility {} overview\nThe facility in zone {} provides cross connects to tenants. "
        "Power is delivered through redundant feeds rated at {} kilowatts. "
        "Cooling relies on chilled water loops with hot aisle containment.",
        i, i, 100 + i);
    d.group_label = i % 2 ? "power" : "network";
    out.push_back(d);
  }
  return out;
}

}  // namespace

TEST(ParseQaOutput, JsonArray) {
  const auto r = parse_qa_output(R"([{"question":"What is a cage?","answer":"A locked enclosure."},
                                     {"question":"Where is DAL1?","answer":"Dallas."}])",
                                 OutputFormat::JsonArray);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0], (RawPair{"What is a cage?", "A locked enclosure."}));
  EXPECT_EQ(r.rejection_count(), 0u);
}

TEST(ParseQaOutput, ThreeValidTwoMissingAnswers) {
  const auto r = parse_qa_output(R"([
    {"question": "Q1?", "answer": "A1"},
    {"question": "Q2?"},
    {"question": "Q3?", "answer": "A3"},
    {"question": "Q4?", "answer": ""},
    {"question": "Q5?", "answer": "A5"}])",
                                 OutputFormat::JsonArray);
  ASSERT_EQ(r.pairs.size(), 3u);
  EXPECT_EQ(r.pairs[2].question, "Q5?");
  ASSERT_EQ(r.rejection_count(), 2u);
  for (const auto& reason : r.rejections) EXPECT_NE(reason.find("question without answer"), std::string::npos);
}

TEST(ParseQaOutput, SalvagesObjectsFromBrokenArray) {
  const auto r = parse_qa_output(R"(Here you go:
[{"question":"What is a PDU?","answer":"A power distribution unit."},
 {"question":"Why containment?","answer":"Efficiency."}
 {"question": broken}
)",
                                 OutputFormat::JsonArray);
  EXPECT_EQ(r.pairs.size(), 2u);
  EXPECT_GE(r.rejection_count(), 1u);
}

TEST(ParseQaOutput, TaggedLines) {
  const auto r = parse_qa_output("Q: What is a meet-me room?\nA: A shared interconnection room.\n\n"
                                 "Question: How many feeds?\nAnswer: Two.\n\nQ: Orphan question?\n",
                                 OutputFormat::TaggedLines);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[1], (RawPair{"How many feeds?", "Two."}));
  EXPECT_EQ(r.rejection_count(), 1u);
}

TEST(ParseQaOutput, JsonFallsBackToTagged) {
  const auto r = parse_qa_output("Q: Alpha?\nA: Beta.", OutputFormat::JsonArray);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].answer, "Beta.");
}

TEST(ParseQaOutput, GarbageIsNeverFatal) {
  for (std::string_view raw : {"", "   ", "{", "[[[", "null", "\"text\"", "[1, 2, 3]"}) {
    EXPECT_NO_THROW({
      const auto r = parse_qa_output(raw, OutputFormat::JsonArray);
      EXPECT_TRUE(r.pairs.empty()) << raw;
    });
  }
}

TEST(GenerationSpec, Validation) {
  auto spec = GenerationSpec::defaults();
  EXPECT_NO_THROW(spec.validate());
  spec.pairs_per_doc = 0;
  EXPECT_EQ(error_kind([&] { spec.validate(); }), ErrorKind::Parameter);
  spec = GenerationSpec::defaults();
  spec.prompt_template = "no placeholders here {document}";
  EXPECT_EQ(error_kind([&] { spec.validate(); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([] { parse_output_format("yaml"); }), ErrorKind::Parameter);
}

TEST(GenerateDnaive, FiveDocsFivePairsWithMock) {
  auto gw = qakit::testing::mock_gateway();
  GenerationOptions opt;
  opt.created_at = "2024-01-01T00:00:00Z";
  const auto d = docs(5);
  const auto r = generate_dnaive(d, GenerationSpec::defaults(5), *gw, opt);
  ASSERT_EQ(r.pairs.size(), 25u);
  EXPECT_TRUE(r.failures.empty());
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& p = r.pairs[i];
    EXPECT_EQ(p.pair_id, fmt::format("dnaive-{:06d}", i + 1));
    EXPECT_EQ(p.method, Method::DNaive);
    ASSERT_EQ(p.source_doc_ids.size(), 1u);
    EXPECT_EQ(p.source_doc_ids[0], d[i / 5].doc_id);
    EXPECT_EQ(p.group_label, d[i / 5].group_label);
    EXPECT_EQ(p.created_at, "2024-01-01T00:00:00Z");
    EXPECT_FALSE(p.question.empty());
    EXPECT_FALSE(p.answer.empty());
  }
}

TEST(GenerateDnaive, TaggedFormatWorksEndToEnd) {
  auto gw = qakit::testing::mock_gateway();
  const auto r = generate_dnaive(docs(3), GenerationSpec::defaults(4, OutputFormat::TaggedLines), *gw, {});
  EXPECT_EQ(r.pairs.size(), 12u);
}

TEST(GenerateDnaive, InputOrderDoesNotMatter) {
  auto gw = qakit::testing::mock_gateway();
  auto d = docs(6);
  const auto a = generate_dnaive(d, GenerationSpec::defaults(3), *gw, {});
  std::reverse(d.begin(), d.end());
  const auto b = generate_dnaive(d, GenerationSpec::defaults(3), *gw, {});
  EXPECT_EQ(a.pairs, b.pairs);
}

TEST(GenerateDnaive, ConcurrencyDoesNotChangeOutput) {
  auto gw = qakit::testing::mock_gateway();
  const auto d = docs(12);
  GenerationOptions serial;
  serial.concurrency = 1;
  GenerationOptions wide;
  wide.concurrency = 8;
  EXPECT_EQ(generate_dnaive(d, GenerationSpec::defaults(), *gw, serial).pairs,
            generate_dnaive(d, GenerationSpec::defaults(), *gw, wide).pairs);
}

TEST(GenerateDnaive, ExcessPairsAreRejected) {
  auto gw = qakit::testing::scripted_gateway([](const llm::ChatRequest&) {
    return llm::ChatResponse{R"([{"question":"a?","answer":"1"},{"question":"b?","answer":"2"},
                                 {"question":"c?","answer":"3"}])"};
  });
  const auto r = generate_dnaive(docs(2), GenerationSpec::defaults(2), *gw, {});
  EXPECT_EQ(r.pairs.size(), 4u);
  ASSERT_EQ(r.rejections.size(), 2u);
  EXPECT_NE(r.rejections[0].reason.find("pairs_per_doc"), std::string::npos);
}

TEST(GenerateDnaive, PartialFailureIsRecorded) {
  auto gw = qakit::testing::scripted_gateway([](const llm::ChatRequest& req) -> llm::ChatResponse {
    if (qakit::testing::prompt_of(req).find("Facility 1 overview") != std::string::npos)
      raise(ErrorKind::MalformedPayload, "boom");
    return llm::ChatResponse{R"([{"question":"a?","answer":"1"}])"};
  });
  const auto r = generate_dnaive(docs(3), GenerationSpec::defaults(1), *gw, {});
  EXPECT_EQ(r.pairs.size(), 2u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].doc_id, "doc-01");
  EXPECT_EQ(r.pairs[1].pair_id, "dnaive-000002");
}

TEST(GenerateDnaive, AllFailuresRaiseGenerationError) {
  auto gw = qakit::testing::scripted_gateway(
      [](const llm::ChatRequest&) -> llm::ChatResponse { raise(ErrorKind::MalformedPayload, "nope"); });
  try {
    generate_dnaive(docs(2), GenerationSpec::defaults(), *gw, {});
    FAIL() << "expected a Generation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Generation);
    EXPECT_NE(std::string(e.what()).find("doc-00"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("doc-01"), std::string::npos);
  }
  EXPECT_EQ(error_kind([&] { generate_dnaive({}, GenerationSpec::defaults(), *gw, {}); }), ErrorKind::Parameter);
}

TEST(Dedupe, ExactKeepsLowestPairId) {
  std::vector<QAPair> pairs{make_pair("p10", "What is a rack?", "late"), make_pair("p2", "what is a  RACK?", "early"),
                            make_pair("p3", "Where is DAL1?", "x")};
  const auto kept = dedupe(pairs, DedupeMode::Exact, 0.95);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].pair_id, "p2");
  EXPECT_EQ(kept[0].answer, "early");
  EXPECT_EQ(kept[1].pair_id, "p3");
}

TEST(Dedupe, SemanticUsesEmbeddingThreshold) {
  // "alpha" and "alpha prime" are nearly parallel, "beta" is orthogonal.
  auto gw = qakit::testing::scripted_gateway({}, [](std::span<const std::string> texts) {
    std::vector<llm::Embedding> out;
    for (const auto& t : texts) {
      if (t == "alpha") out.push_back({1.0, 0.0});
      else if (t == "alpha prime") out.push_back({0.99, 0.1});
      else out.push_back({0.0, 1.0});
    }
    return out;
  });
  std::vector<QAPair> pairs{make_pair("p1", "alpha", "a"), make_pair("p2", "alpha prime", "b"),
                            make_pair("p3", "beta", "c")};
  EXPECT_EQ(dedupe(pairs, DedupeMode::Semantic, 0.95, gw.get()).size(), 2u);
  EXPECT_EQ(dedupe(pairs, DedupeMode::Semantic, 0.999, gw.get()).size(), 3u);
  EXPECT_EQ(dedupe(pairs, DedupeMode::Semantic, 0.0, gw.get()).size(), 1u);
  EXPECT_EQ(dedupe(pairs, DedupeMode::Exact, 0.95).size(), 3u);
}

TEST(Dedupe, ThresholdOneKeepsOnlyIdenticalEmbeddingsOut) {
  auto gw = qakit::testing::scripted_gateway({}, [](std::span<const std::string> texts) {
    return std::vector<llm::Embedding>(texts.size(), llm::Embedding{0.3, 0.4, 0.5});
  });
  std::vector<QAPair> pairs{make_pair("p1", "one", "a"), make_pair("p2", "two", "b")};
  EXPECT_EQ(dedupe(pairs, DedupeMode::Semantic, 1.0, gw.get()).size(), 1u);
}

TEST(Dedupe, ParameterErrors) {
  std::vector<QAPair> pairs{make_pair("p1", "q", "a")};
  EXPECT_EQ(error_kind([&] { dedupe(pairs, DedupeMode::Exact, 1.5); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { dedupe(pairs, DedupeMode::Exact, -0.1); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([&] { dedupe(pairs, DedupeMode::Semantic, 0.9, nullptr); }), ErrorKind::Parameter);
  EXPECT_EQ(error_kind([] { parse_dedupe_mode("fuzzy"); }), ErrorKind::Parameter);
}

TEST(Dedupe, OutputHasNoRepeatedNormalizedQuestions) {
  SplitMix64 rng(11);
  static constexpr std::string_view kWords[] = {"rack", "Rack", "power", "cage", "  rack"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QAPair> pairs;
    const auto n = 1 + rng.next() % 20;
    for (std::size_t i = 0; i < n; ++i)
      pairs.push_back(make_pair(fmt::format("p{}", i), std::string(kWords[rng.next() % 5]), "a"));
    const auto kept = dedupe(pairs, DedupeMode::Exact, 0.95);
    std::set<std::string> seen;
    for (const auto& p : kept) EXPECT_TRUE(seen.insert(text::normalize_for_match(p.question)).second);
    std::set<std::string> all;
    for (const auto& p : pairs) all.insert(text::normalize_for_match(p.question));
    EXPECT_EQ(seen, all);
  }
}
