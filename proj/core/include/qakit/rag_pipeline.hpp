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
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/corpus.hpp"
#include "qakit/llm_gateway.hpp"
#include "qakit/qa_pair.hpp"

namespace qakit::rag {

struct IndexEntry {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
};

/// Chunk embeddings under cosine similarity. Vectors are L2-normalized on
/// insert, so a score is a plain dot product. Immutable once built; safe for
/// concurrent queries.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dimension, std::string corpus_checksum = {});

  /// Throws Internal on a dimension mismatch and Conflict on a repeated
  /// chunk id. A zero vector is rejected (it has no direction).
  void add(IndexEntry entry, std::span<const double> vector);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }
  std::span<const double> vector(std::size_t i) const {
    return {data_.data() + i * dimension_, dimension_};
  }
  const std::string& corpus_checksum() const noexcept { return corpus_checksum_; }

  nlohmann::json to_json() const;
  static VectorIndex from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  /// Refuses (Staleness) to load when `expected_corpus_checksum` is given
  /// and differs from the one recorded in the sidecar.
  static VectorIndex load(const std::filesystem::path& path,
                          const std::optional<std::string>& expected_corpus_checksum = std::nullopt);

 private:
  void insert(IndexEntry entry, std::span<const double> vector, bool normalize);

  std::size_t dimension_;
  std::string corpus_checksum_;
  std::vector<IndexEntry> entries_;
  std::vector<double> data_;
  std::unordered_set<std::string> ids_;
};

struct Hit {
  std::string chunk_id;
  std::string doc_id;
  double score = 0.0;
  std::size_t entry = 0;

  bool operator==(const Hit&) const = default;
};

/// Hits ordered by descending score, ties by ascending chunk id; length is
/// min(k, index size).
struct RetrievalResult {
  std::string query;
  std::size_t k = 0;
  std::vector<Hit> hits;
};

VectorIndex build_index(std::span<const corpus::Chunk> chunks, llm::Gateway& gateway,
                        std::string corpus_checksum = {}, std::size_t batch_size = 64);

/// Exact top-k by exhaustive scan.
RetrievalResult query_vector(const VectorIndex& index, std::span<const double> query, std::size_t k);
RetrievalResult query(const VectorIndex& index, std::string_view question, std::size_t k,
                      llm::Gateway& gateway);

/// Retrieved passages as "[rank] text" blocks in rank order.
std::string render_context(const VectorIndex& index, const RetrievalResult& result);
std::string render_rag_prompt(std::string_view prompt_template, std::string_view question,
                              const VectorIndex& index, const RetrievalResult& result);

struct RegenerationOptions {
  std::string provider_id = "mock";
  std::string model_id = "gpt-4-turbo";
  double temperature = 0.2;
  std::optional<std::int64_t> seed;
  std::string created_at;
  std::size_t concurrency = 4;
};

struct Skip {
  std::string pair_id;
  std::string reason;
};

struct RegenerationResult {
  std::vector<QAPair> pairs;
  std::vector<Skip> skipped;
};

/// The D-RAG pass: keep each D-Naive question, retrieve k passages from the
/// whole corpus, and ask for a fresh answer. Output ids replace a leading
/// "dnaive-" with "drag-" (or prepend "drag-"). Inputs are never modified.
RegenerationResult regenerate_drag(std::span<const QAPair> dnaive_pairs, const VectorIndex& index,
                                   std::size_t k, std::string_view prompt_template,
                                   llm::Gateway& gateway, const RegenerationOptions& options);

std::string drag_pair_id(std::string_view dnaive_id);

/// Fraction of pairs whose single source document appears among the doc
/// ids of its question's top-k passages.
double retrieval_hit_rate(std::span<const QAPair> dnaive_pairs, const VectorIndex& index,
                          std::size_t k, llm::Gateway& gateway);

}  // namespace qakit::rag
