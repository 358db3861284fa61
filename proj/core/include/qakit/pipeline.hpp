// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/errors.hpp"
#include "qakit/llm_gateway.hpp"

namespace qakit::pipeline {

struct CorpusSettings {
  std::filesystem::path source;
  std::string format = "plain_text";
  std::size_t max_chunk_tokens = 256;
  std::size_t overlap_tokens = 32;
};

struct ModelRef {
  std::string provider = "mock";
  std::string model = "gpt-4-turbo";
  double temperature = 0.0;
};

struct GenerationSettings {
  ModelRef model{"mock", "gpt-4-turbo", 0.7};
  std::size_t pairs_per_doc = 5;
  std::string output_format = "json_array";
  /// "none", "exact" or "semantic".
  std::string dedupe = "exact";
  double dedupe_threshold = 0.95;
};

struct RagSettings {
  ModelRef model{"mock", "gpt-4-turbo", 0.2};
  std::size_t k = 3;
};

struct ClassifierSettings {
  ModelRef annotator{"mock", "gpt-4-turbo", 0.0};
  /// 0 annotates every D-Naive pair.
  std::size_t annotation_sample = 0;
  double learning_rate = 1.0;
  double l2_strength = 1e-3;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-10;
  double held_out_fraction = 0.2;
  bool include_answer = false;
};

struct SplitSettings {
  /// Values below 1 are a fraction of each dataset, otherwise a count.
  double test_size = 0.2;
  std::optional<std::uint64_t> seed;
};

struct EvaluationSettings {
  std::vector<std::string> proctors{"mock:gpt-4-turbo", "mock:gemini-pro", "mock:prometheus-13b"};
  /// JSON-Lines of {"pair_id", "response"} from an external inference run.
  std::optional<std::filesystem::path> candidates;
  /// Stand-in for the fine-tuned model when no candidates file is given.
  ModelRef candidate_model{"mock", "llama-2-7b-qakit", 0.0};
  std::optional<std::filesystem::path> rubric;
};

struct PipelineConfig {
  std::filesystem::path config_path;
  std::filesystem::path output_dir;
  /// Stamped into every created_at field so reruns are byte-identical.
  std::string run_timestamp = "1970-01-01T00:00:00Z";
  std::uint64_t seed = 42;
  std::size_t concurrency = 4;
  CorpusSettings corpus;
  std::map<std::string, llm::ProviderConfig> providers;
  std::string embedding_provider = "mock";
  std::optional<std::filesystem::path> transcript;
  GenerationSettings generation;
  RagSettings rag;
  ClassifierSettings classifier;
  SplitSettings split;
  std::vector<std::string> export_formats{"qa_jsonl", "instruct_template_jsonl"};
  EvaluationSettings evaluation;
  nlohmann::json training_overrides = nlohmann::json::object();
  /// The document as read, used for the config hash.
  nlohmann::json raw;

  std::string hash() const;
};

/// Relative paths resolve against `base_dir`. Unknown top-level keys and
/// malformed values raise Parameter errors.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

/// Checks module preconditions, provider references and that the corpus
/// source exists (Dependency error otherwise).
void validate(const PipelineConfig& config);

const std::vector<std::string>& stage_names();

struct Artifact {
  std::string path;  ///< Relative to the output directory.
  std::string sha256;

  bool operator==(const Artifact&) const = default;
};

struct StageManifest {
  std::string stage;
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;
  std::map<std::string, std::size_t> counts;
  double duration_ms = 0.0;
  std::string config_hash;
  /// True when the stage was skipped because nothing changed (not persisted).
  bool reused = false;

  nlohmann::json to_json() const;
  static StageManifest from_json(const nlohmann::json& j);
};

std::filesystem::path manifest_path(const PipelineConfig& config, std::string_view stage);

struct RunOptions {
  bool force = false;
};

/// Runs one stage. Unknown names raise Usage; a missing upstream artifact
/// raises Dependency naming it; an upstream artifact that no longer matches
/// its producer's manifest raises Staleness. A completed stage whose inputs,
/// outputs and config are unchanged is not rerun unless forced.
StageManifest run_stage(const PipelineConfig& config, std::string_view stage, const RunOptions& options = {});
std::vector<StageManifest> run_all(const PipelineConfig& config, const RunOptions& options = {});

std::unique_ptr<llm::Gateway> make_gateway(const PipelineConfig& config);

/// Hit rate of the D-Naive questions against the built index.
double diagnose_retriever(const PipelineConfig& config, std::optional<std::size_t> k = {});

/// Exclusive per-output-directory lock held for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& output_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// 0 ok, 1 runtime, 2 usage, 3 dependency, 4 staleness.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace qakit::pipeline
