// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/qa_pair.hpp"

namespace qakit::dataset {

enum class TaskTag { ProductRecommendation, CallTranscriptNextSteps, SalesPitch, Generic };

std::string_view to_string(TaskTag tag) noexcept;
TaskTag parse_task_tag(std::string_view name);

struct PromptResponsePair {
  std::string pair_id;
  std::string prompt;
  std::string response;
  TaskTag task_tag = TaskTag::Generic;

  bool operator==(const PromptResponsePair&) const = default;
};

using Record = std::variant<QAPair, PromptResponsePair>;

const std::string& record_id(const Record& r);
/// Question or prompt.
const std::string& instruction_of(const Record& r);
/// Answer or response.
const std::string& response_of(const Record& r);

enum class ExportFormat { QaJsonl, InstructTemplateJsonl, PromptResponseJsonl };

std::string_view to_string(ExportFormat format) noexcept;
/// Unknown names raise a Parameter error listing the supported formats.
ExportFormat parse_export_format(std::string_view name);

struct DatasetManifest {
  std::string name;
  std::string method_tag;
  std::size_t record_count = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::optional<std::uint64_t> split_seed;
  std::string export_format;
  std::string content_checksum;
  std::string created_at;
  /// Recorded hash of the instruction template, for instruct exports.
  std::optional<std::string> template_sha256;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct SplitResult {
  std::vector<Record> train;
  std::vector<Record> test;
  DatasetManifest manifest;
};

/// Seeded uniform sample without replacement for the test set; the rest is
/// train. Both keep the input order. Requires 0 < test_size < |records|.
SplitResult split_train_test(std::span<const Record> records, std::size_t test_size, std::uint64_t seed,
                             std::string name = "dataset", std::string method_tag = "mixed",
                             std::string created_at = {});

/// Seeded uniform subset of n records, in input order.
std::vector<Record> sample_records(std::span<const Record> records, std::size_t n, std::uint64_t seed);

enum class SplitRole { Train, Test };

struct ExportOptions {
  std::string name = "dataset";
  std::string method_tag = "mixed";
  std::string created_at;
  std::optional<std::uint64_t> split_seed;
  SplitRole role = SplitRole::Train;
};

/// One JSON object (no trailing newline) for a record in the given format.
std::string render_record(const Record& record, ExportFormat format);

/// Writes one JSON object per line and returns a manifest whose checksum is
/// the SHA-256 of the exact bytes written.
DatasetManifest export_dataset(std::span<const Record> records, ExportFormat format,
                               const std::filesystem::path& path, const ExportOptions& options = {});

std::vector<Record> import_dataset(const std::filesystem::path& path, ExportFormat format);

struct Violation {
  std::size_t line = 0;
  std::string field;
};

struct DuplicateId {
  std::string pair_id;
  std::size_t first_line = 0;
  std::size_t line = 0;
};

struct ValidationReport {
  std::size_t line_count = 0;
  std::vector<std::size_t> parse_failures;
  std::vector<Violation> empty_fields;
  std::vector<DuplicateId> duplicate_ids;

  std::size_t violation_count() const noexcept {
    return parse_failures.size() + empty_fields.size() + duplicate_ids.size();
  }
  bool valid() const noexcept { return violation_count() == 0; }
  nlohmann::json to_json() const;
};

ValidationReport validate_dataset(const std::filesystem::path& path, ExportFormat format);

/// Fine-tuning hyperparameters handed to an external trainer.
struct TrainingConfigManifest {
  std::int64_t epochs = 5;
  double learning_rate = 2e-4;
  std::int64_t per_device_batch_size = 8;
  std::int64_t gradient_accumulation_steps = 4;
  std::string precision = "bfloat16";
  /// AdamW with blockwise model-update filtering.
  std::string optimizer = "adamw-bmuf";
  std::string scheduler = "cosine";
  double warmup_ratio = 0.05;
  std::string adapter_method = "lora";
  std::string base_model_id = "NousResearch/Llama-2-7b-hf";

  nlohmann::json to_json() const;
  bool operator==(const TrainingConfigManifest&) const = default;
};

/// Defaults merged with `overrides` (a JSON object with any subset of the
/// manifest fields). Unknown keys, wrong types and invariant violations
/// raise a Parameter error.
TrainingConfigManifest emit_training_config(const nlohmann::json& overrides = nlohmann::json::object());

}  // namespace qakit::dataset
