// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/rag_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/parallel.hpp"
#include "qakit/prompts.hpp"
#include "qakit/text.hpp"

namespace qakit::rag {

VectorIndex::VectorIndex(std::size_t dimension, std::string corpus_checksum)
    : dimension_(dimension), corpus_checksum_(std::move(corpus_checksum)) {
  if (dimension_ == 0) raise(ErrorKind::Parameter, "index dimension must be positive");
}

void VectorIndex::add(IndexEntry entry, std::span<const double> vector) { insert(std::move(entry), vector, true); }

void VectorIndex::insert(IndexEntry entry, std::span<const double> vector, bool normalize) {
  if (vector.size() != dimension_)
    raise(ErrorKind::Internal, fmt::format("chunk {}: embedding has dimension {}, index expects {}",
                                           entry.chunk_id, vector.size(), dimension_));
  double norm = 0.0;
  for (double x : vector) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm))
    raise(ErrorKind::Internal, fmt::format("chunk {}: embedding is zero or non-finite", entry.chunk_id));
  if (!ids_.insert(entry.chunk_id).second)
    raise(ErrorKind::Conflict, fmt::format("duplicate chunk id {}", entry.chunk_id));
  for (double x : vector) data_.push_back(normalize ? x / norm : x);
  entries_.push_back(std::move(entry));
}

nlohmann::json VectorIndex::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto v = vector(i);
    entries.push_back({{"chunk_id", entries_[i].chunk_id},
                       {"doc_id", entries_[i].doc_id},
                       {"text", entries_[i].text},
                       {"vector", std::vector<double>(v.begin(), v.end())}});
  }
  return {{"format", "qakit.vector_index"},
          {"version", 1},
          {"metric", "cosine"},
          {"dimension", dimension_},
          {"corpus_checksum", corpus_checksum_},
          {"entries", std::move(entries)}};
}

VectorIndex VectorIndex::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "qakit.vector_index")
    raise(ErrorKind::Format, "not a qakit vector index sidecar");
  if (j.value("metric", std::string()) != "cosine")
    raise(ErrorKind::Format, "unsupported index metric");
  VectorIndex index(j.at("dimension").get<std::size_t>(), j.value("corpus_checksum", std::string()));
  for (const auto& e : j.at("entries")) {
    const auto v = e.at("vector").get<std::vector<double>>();
    // Stored vectors are already unit length; renormalizing would drift by an ulp.
    index.insert({e.at("chunk_id").get<std::string>(), e.at("doc_id").get<std::string>(),
                  e.value("text", std::string())},
                 v, false);
  }
  if (index.size() == 0) raise(ErrorKind::Format, "index sidecar has no entries");
  return index;
}

void VectorIndex::save(const std::filesystem::path& path) const {
  write_text_file(path, to_json().dump() + "\n");
}

VectorIndex VectorIndex::load(const std::filesystem::path& path,
                              const std::optional<std::string>& expected_corpus_checksum) {
  auto index = from_json(read_json_file(path));
  if (expected_corpus_checksum && *expected_corpus_checksum != index.corpus_checksum())
    raise(ErrorKind::Staleness,
          fmt::format("index {} was built for corpus {} but the current corpus is {}", path.string(),
                      index.corpus_checksum(), *expected_corpus_checksum));
  return index;
}

VectorIndex build_index(std::span<const corpus::Chunk> chunks, llm::Gateway& gateway,
                        std::string corpus_checksum, std::size_t batch_size) {
  if (chunks.empty()) raise(ErrorKind::Parameter, "build_index: no chunks");
  batch_size = std::max<std::size_t>(batch_size, 1);

  std::optional<VectorIndex> index;
  for (std::size_t start = 0; start < chunks.size(); start += batch_size) {
    const auto n = std::min(batch_size, chunks.size() - start);
    std::vector<std::string> texts;
    texts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) texts.push_back(chunks[start + i].text);
    std::vector<llm::Embedding> vectors;
    try {
      vectors = gateway.embed(texts);
    } catch (const llm::DimensionMismatch& e) {
      raise(ErrorKind::Internal, fmt::format("build_index: embedder returned mixed dimensions at chunk {}: {}",
                                             chunks[start + e.index()].chunk_id, e.what()));
    }
    if (!index) index.emplace(vectors.front().size(), corpus_checksum);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = chunks[start + i];
      if (vectors[i].size() != index->dimension())
        raise(ErrorKind::Internal,
              fmt::format("build_index: embedder returned mixed dimensions at chunk {} ({} vs {})",
                          c.chunk_id, vectors[i].size(), index->dimension()));
      index->add({c.chunk_id, c.doc_id, c.text}, vectors[i]);
    }
  }
  return std::move(*index);
}

RetrievalResult query_vector(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  if (k < 1) raise(ErrorKind::Parameter, "query: k must be at least 1");
  if (query.size() != index.dimension())
    raise(ErrorKind::Parameter, fmt::format("query: vector has dimension {}, index expects {}",
                                            query.size(), index.dimension()));
  double norm = 0.0;
  for (double x : query) norm += x * x;
  norm = std::sqrt(norm);
  const double inv = norm > 0.0 ? 1.0 / norm : 0.0;

  const std::size_t n = index.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = index.vector(i);
    double dot = 0.0;
    for (std::size_t d = 0; d < v.size(); ++d) dot += v[d] * query[d];
    scores[i] = std::clamp(dot * inv, -1.0, 1.0);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto take = std::min(k, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return index.entry(a).chunk_id < index.entry(b).chunk_id;
                    });

  RetrievalResult r;
  r.k = k;
  r.hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto e = order[i];
    r.hits.push_back({index.entry(e).chunk_id, index.entry(e).doc_id, scores[e], e});
  }
  return r;
}

RetrievalResult query(const VectorIndex& index, std::string_view question, std::size_t k,
                      llm::Gateway& gateway) {
  if (k < 1) raise(ErrorKind::Parameter, "query: k must be at least 1");
  const std::string texts[] = {std::string(question)};
  auto vectors = gateway.embed(texts);
  auto r = query_vector(index, vectors.front(), k);
  r.query = std::string(question);
  return r;
}

std::string render_context(const VectorIndex& index, const RetrievalResult& result) {
  std::string out;
  for (std::size_t i = 0; i < result.hits.size(); ++i) {
    if (i) out += "\n\n";
    out += fmt::format("[{}] {}", i + 1, text::trim(index.entry(result.hits[i].entry).text));
  }
  return out;
}

std::string render_rag_prompt(std::string_view prompt_template, std::string_view question,
                              const VectorIndex& index, const RetrievalResult& result) {
  return prompts::render(prompt_template, {{"question", std::string(question)},
                                           {"context", render_context(index, result)}});
}

std::string drag_pair_id(std::string_view dnaive_id) {
  constexpr std::string_view kPrefix = "dnaive-";
  if (dnaive_id.starts_with(kPrefix)) return "drag-" + std::string(dnaive_id.substr(kPrefix.size()));
  return "drag-" + std::string(dnaive_id);
}

namespace {

std::vector<llm::Embedding> embed_questions(std::span<const QAPair> pairs, llm::Gateway& gateway) {
  std::vector<std::string> questions;
  questions.reserve(pairs.size());
  for (const auto& p : pairs) questions.push_back(p.question);
  return gateway.embed(questions);
}

}  // namespace

RegenerationResult regenerate_drag(std::span<const QAPair> dnaive_pairs, const VectorIndex& index,
                                   std::size_t k, std::string_view prompt_template,
                                   llm::Gateway& gateway, const RegenerationOptions& options) {
  if (k < 1) raise(ErrorKind::Parameter, "regenerate_drag: k must be at least 1");
  for (const auto& p : dnaive_pairs)
    if (p.method != Method::DNaive)
      raise(ErrorKind::Parameter, fmt::format("regenerate_drag: pair {} has method {}, expected d_naive",
                                              p.pair_id, to_string(p.method)));
  for (std::string_view key : {"question", "context"})
    if (!prompts::has_placeholder(prompt_template, key))
      raise(ErrorKind::Parameter, fmt::format("RAG template lacks the {{{}}} placeholder", key));

  RegenerationResult result;
  if (dnaive_pairs.empty()) return result;
  const auto vectors = embed_questions(dnaive_pairs, gateway);

  struct Outcome {
    std::optional<QAPair> pair;
    std::string error;
  };
  auto outcomes = parallel_map<Outcome>(dnaive_pairs.size(), options.concurrency, [&](std::size_t i) {
    const auto& in = dnaive_pairs[i];
    const auto retrieved = query_vector(index, vectors[i], k);
    auto request = llm::user_request(options.provider_id, options.model_id,
                                     render_rag_prompt(prompt_template, in.question, index, retrieved),
                                     options.seed);
    request.temperature = options.temperature;
    try {
      auto answer = text::trim(gateway.complete(request).content);
      if (answer.empty()) return Outcome{std::nullopt, "empty answer"};
      QAPair out;
      out.pair_id = drag_pair_id(in.pair_id);
      out.question = in.question;
      out.answer = std::move(answer);
      out.method = Method::DRag;
      for (const auto& h : retrieved.hits)
        if (std::find(out.source_doc_ids.begin(), out.source_doc_ids.end(), h.doc_id) == out.source_doc_ids.end())
          out.source_doc_ids.push_back(h.doc_id);
      out.group_label = in.group_label;
      out.created_at = options.created_at;
      return Outcome{std::move(out), {}};
    } catch (const Error& e) {
      return Outcome{std::nullopt, e.what()};
    }
  });

  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].pair) {
      result.pairs.push_back(std::move(*outcomes[i].pair));
    } else {
      spdlog::warn("D-RAG regeneration skipped {}: {}", dnaive_pairs[i].pair_id, outcomes[i].error);
      result.skipped.push_back({dnaive_pairs[i].pair_id, outcomes[i].error});
    }
  }
  return result;
}

double retrieval_hit_rate(std::span<const QAPair> dnaive_pairs, const VectorIndex& index,
                          std::size_t k, llm::Gateway& gateway) {
  if (dnaive_pairs.empty()) raise(ErrorKind::Parameter, "retrieval_hit_rate: no pairs");
  if (k < 1) raise(ErrorKind::Parameter, "retrieval_hit_rate: k must be at least 1");
  for (const auto& p : dnaive_pairs)
    if (p.source_doc_ids.size() != 1)
      raise(ErrorKind::Parameter, fmt::format("retrieval_hit_rate: pair {} has {} source documents, expected 1",
                                              p.pair_id, p.source_doc_ids.size()));
  const auto vectors = embed_questions(dnaive_pairs, gateway);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dnaive_pairs.size(); ++i) {
    const auto r = query_vector(index, vectors[i], k);
    const auto& source = dnaive_pairs[i].source_doc_ids.front();
    if (std::any_of(r.hits.begin(), r.hits.end(), [&](const Hit& h) { return h.doc_id == source; })) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dnaive_pairs.size());
}

}  // namespace qakit::rag
