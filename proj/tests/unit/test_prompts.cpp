// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/prompts.hpp"
#include "qakit/rag_pipeline.hpp"
#include "test_support.hpp"

using namespace qakit;

TEST(Prompts, EmbeddedAssetsMatchRecordedHashes) {
  const auto& assets = prompts::all_assets();
  ASSERT_GE(assets.size(), 7u);
  for (const auto& a : assets) {
    EXPECT_EQ(sha256_hex(a.text), a.recorded_sha256) << a.name;
    EXPECT_GE(a.version, 1) << a.name;
  }
}

TEST(Prompts, ManifestAgreesWithAssetFilesOnDisk) {
  const auto manifest = read_json_file(qakit::testing::data_path("../core/assets/MANIFEST.json"));
  for (const auto& entry : manifest.at("assets")) {
    const auto file = qakit::testing::data_path("../core/assets") / entry.at("file").get<std::string>();
    EXPECT_EQ(sha256_file(file), entry.at("sha256").get<std::string>()) << file;
  }
}

TEST(Prompts, UnknownAssetIsNotFound) {
  try {
    prompts::asset("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotFound);
  }
}

TEST(Prompts, RenderIsSinglePassAndLeavesForeignBracesAlone) {
  EXPECT_EQ(prompts::render("Hi {name}, {{keep}} {missing}", {{"name", "{name}"}}), "Hi {name}, {{keep}} {missing}");
  EXPECT_EQ(prompts::render("{a}{b}", {{"a", "1"}, {"b", "2"}}), "12");
  EXPECT_TRUE(prompts::has_placeholder("x {document} y", "document"));
  EXPECT_FALSE(prompts::has_placeholder("x {doc} y", "document"));
}

TEST(Prompts, GenerationTemplatesCarryTheirPlaceholders) {
  for (auto name : {prompts::kGenerationJson, prompts::kGenerationTagged}) {
    const auto& t = prompts::asset(name).text;
    EXPECT_TRUE(prompts::has_placeholder(t, "document")) << name;
    EXPECT_TRUE(prompts::has_placeholder(t, "n")) << name;
  }
  EXPECT_TRUE(prompts::has_placeholder(prompts::asset(prompts::kAnnotation).text, "question"));
}

TEST(Prompts, RagPromptWithThreePassagesMatchesGolden) {
  rag::VectorIndex index(3);
  index.add({"d1#0000", "d1", "A cross connect is a cable that links two tenants inside the facility.\n"},
            std::vector<double>{1.0, 0.0, 0.0});
  index.add({"d2#0000", "d2", "The meet-me room hosts carrier equipment."}, std::vector<double>{0.0, 0.0, 1.0});
  index.add({"d3#0000", "d3", "Cross connects are ordered through the customer portal."},
            std::vector<double>{0.6, 0.8, 0.0});
  const std::vector<double> q{0.9, 0.3, 0.1};
  const auto result = rag::query_vector(index, q, 3);
  const auto rendered = rag::render_rag_prompt(prompts::asset(prompts::kRagAnswer).text,
                                               "What does a cross connect link?", index, result);
  EXPECT_EQ(rendered, qakit::testing::read_file(qakit::testing::data_path("golden/rag_prompt_k3.txt")));
}
