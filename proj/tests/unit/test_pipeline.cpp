// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/pipeline.hpp"
#include "qakit/qa_pair.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace qakit;
using namespace qakit::pipeline;
using nlohmann::json;
using qakit::testing::error_kind;
using qakit::testing::TempDir;

namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    qakit::testing::write_synthetic_corpus(tmp_ / "corpus", 8, 3);
    config_path_ = qakit::testing::write_pipeline_config(tmp_.path(), tmp_ / "corpus", tmp_ / "out");
  }

  PipelineConfig config(const json& patch = json::object()) {
    auto j = read_json_file(config_path_);
    j.merge_patch(patch);
    write_json_file(config_path_, j);
    return load_config(config_path_);
  }

  std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), root).generic_string();
      if (rel.starts_with("manifests/")) continue;
      out[rel] = sha256_file(e.path());
    }
    return out;
  }

  TempDir tmp_;
  fs::path config_path_;
};

}  // namespace

TEST_F(PipelineTest, GenerateCountIsDocsTimesPairsWithoutDedupe) {
  const auto cfg = config({{"generation", {{"dedupe", "none"}, {"pairs_per_doc", 4}}}});
  run_stage(cfg, "ingest");
  const auto m = run_stage(cfg, "generate");
  EXPECT_EQ(m.counts.at("documents"), 8u);
  EXPECT_EQ(m.counts.at("pairs"), 32u);
  EXPECT_EQ(read_pairs(cfg.output_dir / "qa/d_naive.jsonl").size(), 32u);
}

TEST_F(PipelineTest, UnknownStageIsUsageError) {
  const auto cfg = config();
  try {
    run_stage(cfg, "frobnicate");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Usage);
    EXPECT_NE(std::string(e.what()).find("ingest"), std::string::npos);
  }
  EXPECT_EQ(exit_code_for(ErrorKind::Usage), 2);
}

TEST_F(PipelineTest, ClassifyBeforeTrainNamesMissingModel) {
  const auto cfg = config();
  run_stage(cfg, "ingest");
  run_stage(cfg, "generate");
  try {
    run_stage(cfg, "classify");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dependency);
    EXPECT_NE(std::string(e.what()).find("model.json"), std::string::npos);
  }
  EXPECT_EQ(exit_code_for(ErrorKind::Dependency), 3);
}

TEST_F(PipelineTest, TamperedUpstreamArtifactIsStale) {
  const auto cfg = config();
  run_stage(cfg, "ingest");
  run_stage(cfg, "generate");
  auto text = qakit::testing::read_file(cfg.output_dir / "qa/d_naive.jsonl");
  qakit::testing::write_file(cfg.output_dir / "qa/d_naive.jsonl", text + "\n");
  try {
    run_stage(cfg, "rag-regenerate");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Staleness);
    EXPECT_NE(std::string(e.what()).find("d_naive.jsonl"), std::string::npos);
  }
  EXPECT_EQ(exit_code_for(ErrorKind::Staleness), 4);
  // Rerunning the producer brings things back in line.
  run_stage(cfg, "generate", {true});
  EXPECT_NO_THROW(run_stage(cfg, "rag-regenerate"));
}

TEST_F(PipelineTest, RerunIsNoOpAndForcedRerunIsIdentical) {
  const auto cfg = config();
  const auto first = run_all(cfg);
  ASSERT_EQ(first.size(), stage_names().size());
  for (const auto& m : first) EXPECT_FALSE(m.reused) << m.stage;
  const auto before = snapshot(cfg.output_dir);

  const auto second = run_all(cfg);
  for (const auto& m : second) EXPECT_TRUE(m.reused) << m.stage;
  EXPECT_EQ(snapshot(cfg.output_dir), before);

  const auto forced = run_all(cfg, {true});
  for (const auto& m : forced) EXPECT_FALSE(m.reused) << m.stage;
  EXPECT_EQ(snapshot(cfg.output_dir), before);

  for (const auto& stage : stage_names()) {
    const auto m = StageManifest::from_json(read_json_file(manifest_path(cfg, stage)));
    EXPECT_EQ(m.stage, stage);
    EXPECT_EQ(m.config_hash, cfg.hash());
    EXPECT_FALSE(m.outputs.empty()) << stage;
    for (const auto& o : m.outputs) EXPECT_EQ(sha256_file(cfg.output_dir / o.path), o.sha256) << o.path;
  }
}

TEST_F(PipelineTest, ConfigChangeInvalidatesReuse) {
  auto cfg = config();
  run_stage(cfg, "ingest");
  EXPECT_TRUE(run_stage(cfg, "ingest").reused);
  cfg = config({{"corpus", {{"max_chunk_tokens", 90}}}});
  EXPECT_FALSE(run_stage(cfg, "ingest").reused);
  const auto seeded = load_config(config_path_, 99);
  EXPECT_EQ(seeded.seed, 99u);
  EXPECT_NE(seeded.hash(), cfg.hash());
}

TEST_F(PipelineTest, LockConflict) {
  const auto cfg = config();
  fs::create_directories(cfg.output_dir);
  RunLock lock(cfg.output_dir);
  EXPECT_EQ(error_kind([&] { RunLock second(cfg.output_dir); }), ErrorKind::Conflict);
}

TEST_F(PipelineTest, LockIsReleased) {
  const auto cfg = config();
  fs::create_directories(cfg.output_dir);
  { RunLock lock(cfg.output_dir); }
  EXPECT_NO_THROW(RunLock again(cfg.output_dir));
}

TEST_F(PipelineTest, ConfigValidation) {
  const auto original = read_json_file(config_path_);
  auto with = [&](const json& patch) {
    auto j = original;
    j.merge_patch(patch);
    write_json_file(config_path_, j);
    return [this] { validate(load_config(config_path_)); };
  };
  EXPECT_EQ(error_kind(with({{"bogus_key", 1}})), ErrorKind::Parameter);
  EXPECT_EQ(error_kind(with({{"generation", {{"dedupe", "fuzzy"}}}})), ErrorKind::Parameter);
  EXPECT_EQ(error_kind(with({{"corpus", {{"surprise", true}}}})), ErrorKind::Parameter);
  EXPECT_EQ(error_kind(with({{"rag", {{"k", 0}}}})), ErrorKind::Parameter);
  EXPECT_EQ(error_kind(with({{"corpus", {{"source", (tmp_ / "missing").string()}}}})), ErrorKind::Dependency);
  EXPECT_EQ(error_kind(with(json::object())), std::nullopt);
  EXPECT_EQ(error_kind([&] { load_config(tmp_ / "nope.json"); }), ErrorKind::Dependency);
}

TEST_F(PipelineTest, RelativePathsResolveAgainstConfigDir) {
  auto j = read_json_file(config_path_);
  j["corpus"]["source"] = "corpus";
  j["output_dir"] = "out";
  write_json_file(config_path_, j);
  const auto cfg = load_config(config_path_);
  EXPECT_EQ(fs::weakly_canonical(cfg.corpus.source), fs::weakly_canonical(tmp_ / "corpus"));
  EXPECT_EQ(fs::weakly_canonical(cfg.output_dir), fs::weakly_canonical(tmp_ / "out"));
}

TEST_F(PipelineTest, ArtifactsHaveExpectedShape) {
  const auto cfg = config();
  run_all(cfg);
  const auto& out = cfg.output_dir;
  for (const auto* rel : {"corpus/documents.jsonl", "corpus/chunks.jsonl", "qa/d_naive.jsonl", "qa/d_rag.jsonl",
                          "index/index.json", "classifier/model.json", "qa/conceptual.jsonl", "qa/factual.jsonl",
                          "exports/training_config.json", "eval/records.jsonl", "eval/summary.json",
                          "eval/table.txt", "eval/histogram.csv", "eval/histogram.json"})
    EXPECT_TRUE(fs::exists(out / rel)) << rel;

  const auto naive = read_pairs(out / "qa/d_naive.jsonl");
  const auto rag = read_pairs(out / "qa/d_rag.jsonl");
  EXPECT_EQ(rag.size(), naive.size());
  EXPECT_EQ(read_pairs(out / "qa/conceptual.jsonl").size() + read_pairs(out / "qa/factual.jsonl").size(),
            naive.size());
  for (const auto& p : naive) EXPECT_EQ(p.created_at, "2026-01-01T00:00:00Z");

  const auto table = qakit::testing::read_file(out / "eval/table.txt");
  EXPECT_TRUE(table.starts_with("Dataset "));
  for (const auto* row : {"\nD-RAG ", "\nD-Naive ", "\nFactual ", "\nConceptual "})
    EXPECT_NE(table.find(row), std::string::npos) << row;
  EXPECT_LT(table.find("D-RAG"), table.find("D-Naive"));

  const auto summary = read_json_file(out / "eval/summary.json");
  EXPECT_FALSE(summary.empty());
  EXPECT_GE(diagnose_retriever(cfg), 0.0);
}
