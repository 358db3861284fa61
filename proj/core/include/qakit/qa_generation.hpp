// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qakit/corpus.hpp"
#include "qakit/llm_gateway.hpp"
#include "qakit/qa_pair.hpp"

namespace qakit::generation {

enum class OutputFormat { TaggedLines, JsonArray };

std::string_view to_string(OutputFormat format) noexcept;
OutputFormat parse_output_format(std::string_view name);

struct GenerationSpec {
  std::size_t pairs_per_doc = 5;
  /// Must contain {document} and {n}.
  std::string prompt_template;
  OutputFormat output_format = OutputFormat::JsonArray;

  /// The shipped template for the given output format.
  static GenerationSpec defaults(std::size_t pairs_per_doc = 5,
                                 OutputFormat format = OutputFormat::JsonArray);
  void validate() const;
};

struct GenerationOptions {
  std::string provider_id = "mock";
  std::string model_id = "gpt-4-turbo";
  double temperature = 0.7;
  std::optional<std::int64_t> seed;
  std::string created_at;
  std::string id_prefix = "dnaive";
  std::size_t concurrency = 4;
};

struct Rejection {
  std::string doc_id;
  std::string reason;
};

struct DocumentFailure {
  std::string doc_id;
  std::string error;
};

struct GenerationResult {
  std::vector<QAPair> pairs;
  std::vector<Rejection> rejections;
  std::vector<DocumentFailure> failures;
};

/// Prompts the generator once per document and collects the parsed pairs.
/// Documents are processed in doc_id order and pair ids are assigned
/// sequentially after the merge, so concurrency never affects the output.
/// Per-document failures are recorded and skipped; if every document fails
/// a Generation error lists them.
GenerationResult generate_dnaive(std::span<const corpus::Document> docs, const GenerationSpec& spec,
                                 llm::Gateway& gateway, const GenerationOptions& options);

struct RawPair {
  std::string question;
  std::string answer;

  bool operator==(const RawPair&) const = default;
};

struct ParseResult {
  std::vector<RawPair> pairs;
  /// One human-readable reason per rejected entry.
  std::vector<std::string> rejections;

  std::size_t rejection_count() const noexcept { return rejections.size(); }
};

/// Tolerant parser for generator output. JSON input is read as a whole
/// array when possible; otherwise each top-level object is salvaged on its
/// own, and if none are found the text is retried as tagged lines
/// ("Q:"/"A:", also "Question:"/"Answer:"). Entries lacking a question or
/// an answer are rejected, never fatal.
ParseResult parse_qa_output(std::string_view raw, OutputFormat format);

enum class DedupeMode { Exact, Semantic };

DedupeMode parse_dedupe_mode(std::string_view name);

/// Drops pairs whose normalized question repeats an earlier one (by pair id
/// order). Semantic mode also drops a pair whose question embedding has
/// cosine >= threshold with any kept pair; it requires `gateway`.
std::vector<QAPair> dedupe(std::span<const QAPair> pairs, DedupeMode mode, double threshold,
                           llm::Gateway* gateway = nullptr);

double cosine(std::span<const double> a, std::span<const double> b);

void write_rejections(const std::filesystem::path& path, std::span<const Rejection> rejections,
                      std::span<const DocumentFailure> failures);

}  // namespace qakit::generation
