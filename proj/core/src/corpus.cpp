// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/text.hpp"

namespace fs = std::filesystem;

namespace qakit::corpus {
namespace {

constexpr std::size_t kMaxTitleLength = 120;

std::string read_source(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) raise(ErrorKind::Io, "not a readable file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) raise(ErrorKind::Io, "read failed for " + path.string());
  return ss.str();
}

std::string first_line(std::string_view body) {
  for (std::size_t pos = 0; pos < body.size();) {
    std::size_t nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    auto line = text::trim(body.substr(pos, nl - pos));
    if (!line.empty()) return line;
    pos = nl + 1;
  }
  return {};
}

std::string extract_title(std::string_view raw, std::string_view body, InputFormat format) {
  std::string title;
  if (format == InputFormat::HtmlStripped) {
    const auto lower = text::to_lower(raw);
    const auto open = lower.find("<title>");
    const auto close = lower.find("</title>");
    if (open != std::string::npos && close != std::string::npos && close > open)
      title = text::collapse_whitespace(strip_html(raw.substr(open + 7, close - open - 7)));
  }
  if (title.empty()) title = first_line(body);
  if (format == InputFormat::Markdown) {
    std::size_t i = 0;
    while (i < title.size() && title[i] == '#') ++i;
    title = text::trim(std::string_view(title).substr(i));
  }
  if (title.size() > kMaxTitleLength) title.resize(kMaxTitleLength);
  return title;
}

bool hidden(const fs::path& rel) {
  for (const auto& part : rel) {
    const auto s = part.string();
    if (!s.empty() && s[0] == '.' && s != "." && s != "..") return true;
  }
  return false;
}

std::optional<Document> load_document(const fs::path& path, std::string source_uri,
                                      std::string group_label, InputFormat format,
                                      std::vector<std::string>& warnings) {
  const auto raw = read_source(path);
  auto body = normalize_body(raw, format);
  if (body.empty()) {
    auto msg = fmt::format("skipping {}: body is empty after whitespace normalization", source_uri);
    spdlog::warn(msg);
    warnings.push_back(std::move(msg));
    return std::nullopt;
  }
  Document doc;
  doc.doc_id = make_doc_id(source_uri);
  doc.title = extract_title(raw, body, format);
  doc.source_uri = std::move(source_uri);
  doc.body = std::move(body);
  doc.group_label = std::move(group_label);
  return doc;
}

}  // namespace

InputFormat parse_input_format(std::string_view name) {
  if (name == "plain_text" || name == "plain-text" || name == "text") return InputFormat::PlainText;
  if (name == "markdown") return InputFormat::Markdown;
  if (name == "html_stripped" || name == "html-stripped" || name == "html")
    return InputFormat::HtmlStripped;
  raise(ErrorKind::Parameter, fmt::format("unknown input format '{}' (supported: plain_text, "
                                          "markdown, html_stripped)",
                                          name));
}

std::string_view to_string(InputFormat format) noexcept {
  switch (format) {
    case InputFormat::PlainText: return "plain_text";
    case InputFormat::Markdown: return "markdown";
    case InputFormat::HtmlStripped: return "html_stripped";
  }
  return "plain_text";
}

std::string strip_html(std::string_view html) {
  std::string out;
  out.reserve(html.size());
  const auto lower = text::to_lower(html);
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] == '<') {
      for (std::string_view skip : {"<script", "<style"}) {
        if (lower.compare(i, skip.size(), skip) == 0) {
          const auto end_tag = fmt::format("</{}", skip.substr(1));
          const auto close = lower.find(end_tag, i);
          i = close == std::string::npos ? html.size() : close;
          break;
        }
      }
      if (i >= html.size()) break;
      const auto close = html.find('>', i);
      if (close == std::string_view::npos) break;
      auto name = lower.substr(i + 1, close - i - 1);
      if (!name.empty() && name[0] == '/') name.erase(0, 1);
      name = name.substr(0, name.find_first_of(" \t\n/>"));
      static const std::set<std::string> kBlock = {"p",  "br", "div", "li", "ul", "ol", "tr",
                                                    "h1", "h2", "h3",  "h4", "h5", "h6", "title",
                                                    "section", "article", "table"};
      out.push_back(kBlock.count(name) ? '\n' : ' ');
      i = close + 1;
      continue;
    }
    if (html[i] == '&') {
      static const std::pair<std::string_view, char> kEntities[] = {
          {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&#39;", '\''},
          {"&apos;", '\''}, {"&nbsp;", ' '}};
      bool matched = false;
      for (const auto& [entity, ch] : kEntities) {
        if (html.compare(i, entity.size(), entity) == 0) {
          out.push_back(ch);
          i += entity.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(html[i++]);
  }
  return out;
}

std::string normalize_body(std::string_view raw, InputFormat format) {
  std::string src = text::replace_all(raw, "\r\n", "\n");
  std::replace(src.begin(), src.end(), '\r', '\n');
  if (format == InputFormat::HtmlStripped) src = strip_html(src);

  std::string out;
  out.reserve(src.size());
  std::size_t blank_run = 0;
  std::size_t pos = 0;
  while (pos <= src.size()) {
    std::size_t nl = src.find('\n', pos);
    if (nl == std::string::npos) nl = src.size();
    std::string_view line(src.data() + pos, nl - pos);
    std::size_t e = line.size();
    while (e > 0 && text::is_space(line[e - 1])) --e;
    line = line.substr(0, e);
    if (line.empty()) {
      ++blank_run;
    } else {
      if (!out.empty()) out.append(blank_run > 0 ? "\n\n" : "\n");
      out.append(line);
      blank_run = 0;
    }
    pos = nl + 1;
  }
  return text::trim(out);
}

std::string make_doc_id(std::string_view source_uri) {
  return "doc-" + sha256_hex(source_uri).substr(0, 16);
}

IngestResult ingest(const fs::path& root, InputFormat format) {
  std::error_code ec;
  if (!fs::exists(root, ec)) raise(ErrorKind::Io, "source does not exist: " + root.string());
  if (fs::is_regular_file(root, ec)) {
    const fs::path single[] = {root};
    return ingest(std::span<const fs::path>(single), format);
  }
  if (!fs::is_directory(root, ec)) raise(ErrorKind::Io, "source is not readable: " + root.string());

  std::vector<fs::path> rels;
  fs::recursive_directory_iterator it(root, fs::directory_options::none, ec);
  if (ec) raise(ErrorKind::Io, "cannot list " + root.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file()) continue;
    auto rel = entry.path().lexically_relative(root);
    if (hidden(rel)) continue;
    rels.push_back(std::move(rel));
  }
  std::sort(rels.begin(), rels.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

  IngestResult result;
  for (const auto& rel : rels) {
    auto it_part = rel.begin();
    std::string group = "default";
    if (std::distance(rel.begin(), rel.end()) > 1) group = it_part->string();
    if (auto doc = load_document(root / rel, rel.generic_string(), group, format, result.warnings))
      result.documents.push_back(std::move(*doc));
  }
  return result;
}

IngestResult ingest(std::span<const fs::path> files, InputFormat format) {
  IngestResult result;
  std::set<std::string> seen;
  for (const auto& file : files) {
    std::error_code ec;
    auto uri = fs::weakly_canonical(file, ec).generic_string();
    if (ec) uri = file.lexically_normal().generic_string();
    if (!seen.insert(uri).second)
      raise(ErrorKind::Conflict, "duplicate source_uri: " + uri);
    if (auto doc = load_document(file, uri, "default", format, result.warnings))
      result.documents.push_back(std::move(*doc));
  }
  return result;
}

std::vector<Chunk> chunk(const Document& doc, std::size_t max_tokens, std::size_t overlap_tokens) {
  if (overlap_tokens >= max_tokens)
    raise(ErrorKind::Parameter,
          fmt::format("overlap_tokens ({}) must be smaller than max_tokens ({})", overlap_tokens,
                      max_tokens));
  const auto words = text::word_spans(doc.body);
  std::vector<Chunk> chunks;
  if (words.empty()) return chunks;

  const std::size_t stride = max_tokens - overlap_tokens;
  for (std::size_t first = 0;; first += stride) {
    const std::size_t last = std::min(first + max_tokens, words.size());
    const bool final = last == words.size();
    Chunk c;
    c.chunk_id = fmt::format("{}#{:04d}", doc.doc_id, chunks.size());
    c.doc_id = doc.doc_id;
    c.start_offset = first == 0 ? 0 : words[first].begin;
    c.end_offset = final ? doc.body.size() : words[last].begin;
    c.text = doc.body.substr(c.start_offset, c.end_offset - c.start_offset);
    c.token_estimate = last - first;
    chunks.push_back(std::move(c));
    if (final) break;
  }
  return chunks;
}

std::vector<Chunk> chunk_all(std::span<const Document> docs, std::size_t max_tokens,
                             std::size_t overlap_tokens) {
  std::vector<Chunk> out;
  for (const auto& d : docs) {
    auto cs = chunk(d, max_tokens, overlap_tokens);
    std::move(cs.begin(), cs.end(), std::back_inserter(out));
  }
  return out;
}

std::string corpus_checksum(std::span<const Document> docs) {
  std::string buf;
  for (const auto& d : docs) {
    buf += d.doc_id;
    buf += '\0';
    buf += sha256_hex(d.body);
    buf += '\n';
  }
  return sha256_hex(buf);
}

std::string chunks_checksum(std::span<const Chunk> chunks) {
  std::string buf;
  for (const auto& c : chunks) {
    buf += c.chunk_id;
    buf += '\0';
    buf += sha256_hex(c.text);
    buf += '\n';
  }
  return sha256_hex(buf);
}

void to_json(nlohmann::json& j, const Document& d) {
  j = nlohmann::json{{"doc_id", d.doc_id},
                     {"source_uri", d.source_uri},
                     {"title", d.title},
                     {"body", d.body},
                     {"group_label", d.group_label}};
}

void from_json(const nlohmann::json& j, Document& d) {
  j.at("doc_id").get_to(d.doc_id);
  j.at("source_uri").get_to(d.source_uri);
  j.at("title").get_to(d.title);
  j.at("body").get_to(d.body);
  j.at("group_label").get_to(d.group_label);
}

void to_json(nlohmann::json& j, const Chunk& c) {
  j = nlohmann::json{{"chunk_id", c.chunk_id},         {"doc_id", c.doc_id},
                     {"text", c.text},                 {"start_offset", c.start_offset},
                     {"end_offset", c.end_offset},     {"token_estimate", c.token_estimate}};
}

void from_json(const nlohmann::json& j, Chunk& c) {
  j.at("chunk_id").get_to(c.chunk_id);
  j.at("doc_id").get_to(c.doc_id);
  j.at("text").get_to(c.text);
  j.at("start_offset").get_to(c.start_offset);
  j.at("end_offset").get_to(c.end_offset);
  j.at("token_estimate").get_to(c.token_estimate);
}

void write_documents(const fs::path& path, std::span<const Document> docs) {
  std::vector<json> rows(docs.begin(), docs.end());
  write_jsonl(path, rows);
}

std::vector<Document> read_documents(const fs::path& path) {
  std::vector<Document> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<Document>());
  return out;
}

void write_chunks(const fs::path& path, std::span<const Chunk> chunks) {
  std::vector<json> rows(chunks.begin(), chunks.end());
  write_jsonl(path, rows);
}

std::vector<Chunk> read_chunks(const fs::path& path) {
  std::vector<Chunk> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<Chunk>());
  return out;
}

}  // namespace qakit::corpus
