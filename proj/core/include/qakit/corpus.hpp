// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qakit::corpus {

struct Document {
  std::string doc_id;
  std::string source_uri;
  std::string title;
  std::string body;
  /// Top-level subdirectory the file came from, or "default".
  std::string group_label;

  bool operator==(const Document&) const = default;
};

/// A window of consecutive words from a document body.
/// Invariant: text == body.substr(start_offset, end_offset - start_offset).
/// Non-final chunks include the whitespace up to the next window's first
/// word, so overlap-free chunks tile the body exactly.
struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
  std::size_t start_offset = 0;
  std::size_t end_offset = 0;
  std::size_t token_estimate = 0;

  bool operator==(const Chunk&) const = default;
};

enum class InputFormat { PlainText, Markdown, HtmlStripped };

InputFormat parse_input_format(std::string_view name);
std::string_view to_string(InputFormat format) noexcept;

struct IngestResult {
  std::vector<Document> documents;
  std::vector<std::string> warnings;
};

/// Ingests every non-hidden regular file under `root`, sorted by relative
/// path. The first path component below `root` becomes the group label.
IngestResult ingest(const std::filesystem::path& root, InputFormat format);

/// Ingests an explicit file list. Listing the same file twice is a conflict.
IngestResult ingest(std::span<const std::filesystem::path> files, InputFormat format);

/// Text cleanup applied on ingest: CRLF to LF, HTML tags dropped (for
/// HtmlStripped), trailing spaces removed per line, blank-line runs capped
/// at one, outer whitespace trimmed.
std::string normalize_body(std::string_view raw, InputFormat format);

std::string strip_html(std::string_view html);

std::string make_doc_id(std::string_view source_uri);

/// Sliding window over whitespace-delimited words with stride
/// max_tokens - overlap_tokens. Requires max_tokens > overlap_tokens.
std::vector<Chunk> chunk(const Document& doc, std::size_t max_tokens, std::size_t overlap_tokens);

std::vector<Chunk> chunk_all(std::span<const Document> docs, std::size_t max_tokens,
                             std::size_t overlap_tokens);

/// Digest over (doc_id, body) of every document in order; ties a vector
/// index to the corpus it was built from.
std::string corpus_checksum(std::span<const Document> docs);
std::string chunks_checksum(std::span<const Chunk> chunks);

void to_json(nlohmann::json& j, const Document& d);
void from_json(const nlohmann::json& j, Document& d);
void to_json(nlohmann::json& j, const Chunk& c);
void from_json(const nlohmann::json& j, Chunk& c);

void write_documents(const std::filesystem::path& path, std::span<const Document> docs);
std::vector<Document> read_documents(const std::filesystem::path& path);
void write_chunks(const std::filesystem::path& path, std::span<const Chunk> chunks);
std::vector<Chunk> read_chunks(const std::filesystem::path& path);

}  // namespace qakit::corpus
