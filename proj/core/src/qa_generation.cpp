// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/qa_generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/parallel.hpp"
#include "qakit/prompts.hpp"
#include "qakit/text.hpp"

namespace qakit::generation {
namespace {

void accept_entry(const json& item, std::size_t index, ParseResult& out) {
  if (!item.is_object()) {
    out.rejections.push_back(fmt::format("entry {}: not an object", index));
    return;
  }
  auto field = [&](const char* key) -> std::string {
    auto it = item.find(key);
    if (it == item.end() || !it->is_string()) return {};
    return text::trim(it->get<std::string>());
  };
  auto q = field("question");
  auto a = field("answer");
  if (q.empty() && a.empty()) {
    out.rejections.push_back(fmt::format("entry {}: missing question and answer", index));
  } else if (q.empty()) {
    out.rejections.push_back(fmt::format("entry {}: missing question", index));
  } else if (a.empty()) {
    out.rejections.push_back(fmt::format("entry {}: question without answer", index));
  } else {
    out.pairs.push_back({std::move(q), std::move(a)});
  }
}

// Top-level {...} spans in `s`, honouring string literals and escapes.
std::vector<std::string_view> object_spans(std::string_view s) {
  std::vector<std::string_view> spans;
  int depth = 0;
  bool in_string = false, escaped = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      if (depth++ == 0) start = i;
    } else if (c == '}' && depth > 0) {
      if (--depth == 0) spans.push_back(s.substr(start, i - start + 1));
    }
  }
  return spans;
}

bool parse_json(std::string_view raw, ParseResult& out) {
  const auto open = raw.find('[');
  const auto close = raw.rfind(']');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    const auto parsed = json::parse(raw.substr(open, close - open + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_array()) {
      for (std::size_t i = 0; i < parsed.size(); ++i) accept_entry(parsed[i], i, out);
      return true;
    }
  }
  const auto body = open == std::string_view::npos ? raw : raw.substr(open);
  const auto spans = object_spans(body);
  if (spans.empty()) return false;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto parsed = json::parse(spans[i], nullptr, false);
    if (parsed.is_discarded()) {
      out.rejections.push_back(fmt::format("entry {}: malformed JSON object", i));
      continue;
    }
    accept_entry(parsed, i, out);
  }
  return true;
}

// Strips list markers such as "1." "2)" "-" "*" and markdown bold.
std::string_view strip_marker(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (std::isdigit(static_cast<unsigned char>(line[i])))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) line.remove_prefix(i + 1);
  else if (!line.empty() && (line[0] == '-' || line[0] == '*') && line.size() > 1 && line[1] == ' ')
    line.remove_prefix(2);
  while (!line.empty() && (line.front() == ' ' || line.front() == '*')) line.remove_prefix(1);
  return line;
}

std::optional<std::string_view> tag_value(std::string_view line, std::initializer_list<std::string_view> tags) {
  for (auto tag : tags) {
    if (text::starts_with_ci(line, tag)) {
      auto rest = line.substr(tag.size());
      while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) rest.remove_prefix(1);
      return rest;
    }
  }
  return std::nullopt;
}

void parse_tagged(std::string_view raw, ParseResult& out) {
  std::optional<std::string> q, a;
  std::size_t entry = 0;
  auto flush = [&] {
    if (!q) return;
    auto qt = text::trim(*q);
    auto at = a ? text::trim(*a) : std::string();
    if (qt.empty()) out.rejections.push_back(fmt::format("entry {}: empty question", entry));
    else if (at.empty()) out.rejections.push_back(fmt::format("entry {}: question without answer", entry));
    else out.pairs.push_back({std::move(qt), std::move(at)});
    ++entry;
    q.reset();
    a.reset();
  };

  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    const auto trimmed = text::trim(raw.substr(pos, nl - pos));
    pos = nl + 1;
    if (trimmed.empty()) continue;
    const auto line = strip_marker(trimmed);
    if (auto v = tag_value(line, {"question:", "q:"})) {
      flush();
      q = std::string(*v);
    } else if (auto v2 = tag_value(line, {"answer:", "a:"})) {
      if (!q) {
        out.rejections.push_back(fmt::format("entry {}: answer without question", entry++));
        continue;
      }
      if (a) {
        *a += ' ';
        *a += *v2;
      } else {
        a = std::string(*v2);
      }
    } else if (a) {
      *a += ' ' + std::string(trimmed);
    } else if (q) {
      *q += ' ' + std::string(trimmed);
    }
  }
  flush();
}

}  // namespace

std::string_view to_string(OutputFormat format) noexcept {
  return format == OutputFormat::JsonArray ? "json_array" : "tagged_lines";
}

OutputFormat parse_output_format(std::string_view name) {
  if (name == "json_array") return OutputFormat::JsonArray;
  if (name == "tagged_lines") return OutputFormat::TaggedLines;
  raise(ErrorKind::Parameter, fmt::format("unknown output format '{}' (expected json_array or tagged_lines)", name));
}

GenerationSpec GenerationSpec::defaults(std::size_t pairs_per_doc, OutputFormat format) {
  GenerationSpec spec;
  spec.pairs_per_doc = pairs_per_doc;
  spec.output_format = format;
  spec.prompt_template = std::string(
      prompts::asset(format == OutputFormat::JsonArray ? prompts::kGenerationJson : prompts::kGenerationTagged).text);
  return spec;
}

void GenerationSpec::validate() const {
  if (pairs_per_doc == 0) raise(ErrorKind::Parameter, "pairs_per_doc must be positive");
  for (std::string_view key : {"document", "n"})
    if (!prompts::has_placeholder(prompt_template, key))
      raise(ErrorKind::Parameter, fmt::format("generation template lacks the {{{}}} placeholder", key));
}

ParseResult parse_qa_output(std::string_view raw, OutputFormat format) {
  ParseResult out;
  if (format == OutputFormat::JsonArray && parse_json(raw, out)) return out;
  parse_tagged(raw, out);
  return out;
}

GenerationResult generate_dnaive(std::span<const corpus::Document> docs, const GenerationSpec& spec,
                                 llm::Gateway& gateway, const GenerationOptions& options) {
  if (docs.empty()) raise(ErrorKind::Parameter, "generate_dnaive: no documents");
  spec.validate();

  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return docs[a].doc_id < docs[b].doc_id; });

  struct Outcome {
    std::optional<ParseResult> parsed;
    std::string error;
  };
  auto outcomes = parallel_map<Outcome>(order.size(), options.concurrency, [&](std::size_t k) {
    const auto& doc = docs[order[k]];
    const auto prompt = prompts::render(
        spec.prompt_template, {{"document", doc.body}, {"n", std::to_string(spec.pairs_per_doc)}});
    auto request = llm::user_request(options.provider_id, options.model_id, prompt, options.seed);
    request.temperature = options.temperature;
    request.max_output_tokens = 256 * spec.pairs_per_doc + 256;
    try {
      const auto response = gateway.complete(request);
      return Outcome{parse_qa_output(response.content, spec.output_format), {}};
    } catch (const Error& e) {
      return Outcome{std::nullopt, e.what()};
    }
  });

  GenerationResult result;
  std::size_t next_id = 1;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& doc = docs[order[k]];
    auto& outcome = outcomes[k];
    if (!outcome.parsed) {
      spdlog::warn("generation failed for {}: {}", doc.doc_id, outcome.error);
      result.failures.push_back({doc.doc_id, outcome.error});
      continue;
    }
    for (auto& reason : outcome.parsed->rejections) {
      spdlog::warn("generation output for {} rejected: {}", doc.doc_id, reason);
      result.rejections.push_back({doc.doc_id, std::move(reason)});
    }
    auto& pairs = outcome.parsed->pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (i >= spec.pairs_per_doc) {
        result.rejections.push_back(
            {doc.doc_id, fmt::format("entry beyond pairs_per_doc ({}) dropped", spec.pairs_per_doc)});
        continue;
      }
      QAPair p;
      p.pair_id = fmt::format("{}-{:06d}", options.id_prefix, next_id++);
      p.question = std::move(pairs[i].question);
      p.answer = std::move(pairs[i].answer);
      p.method = Method::DNaive;
      p.source_doc_ids = {doc.doc_id};
      p.group_label = doc.group_label;
      p.created_at = options.created_at;
      result.pairs.push_back(std::move(p));
    }
  }

  if (result.failures.size() == docs.size()) {
    std::string diag;
    for (const auto& f : result.failures) diag += fmt::format("\n  {}: {}", f.doc_id, f.error);
    raise(ErrorKind::Generation, fmt::format("generation failed for all {} documents:{}", docs.size(), diag));
  }
  return result;
}

DedupeMode parse_dedupe_mode(std::string_view name) {
  if (name == "exact") return DedupeMode::Exact;
  if (name == "semantic") return DedupeMode::Semantic;
  raise(ErrorKind::Parameter, fmt::format("unknown dedupe mode '{}' (expected exact or semantic)", name));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) raise(ErrorKind::Parameter, "cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<QAPair> dedupe(std::span<const QAPair> pairs, DedupeMode mode, double threshold,
                           llm::Gateway* gateway) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    raise(ErrorKind::Parameter, fmt::format("dedupe threshold {} is outside [0, 1]", threshold));
  if (mode == DedupeMode::Semantic && gateway == nullptr)
    raise(ErrorKind::Parameter, "semantic dedupe requires an embedding gateway");

  std::vector<QAPair> sorted(pairs.begin(), pairs.end());
  sort_by_pair_id(sorted);

  std::vector<llm::Embedding> vectors;
  if (mode == DedupeMode::Semantic && !sorted.empty()) {
    std::vector<std::string> questions;
    questions.reserve(sorted.size());
    for (const auto& p : sorted) questions.push_back(p.question);
    vectors = gateway->embed(questions);
  }

  // Absorbs rounding so identical embeddings always meet threshold 1.0.
  constexpr double kSimilaritySlack = 1e-12;
  std::set<std::string> seen;
  std::vector<std::size_t> kept_idx;
  std::vector<QAPair> kept;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!seen.insert(text::normalize_for_match(sorted[i].question)).second) continue;
    if (mode == DedupeMode::Semantic) {
      const bool near = std::any_of(kept_idx.begin(), kept_idx.end(), [&](std::size_t k) {
        return cosine(vectors[i], vectors[k]) + kSimilaritySlack >= threshold;
      });
      if (near) continue;
      kept_idx.push_back(i);
    }
    kept.push_back(sorted[i]);
  }
  return kept;
}

void write_rejections(const std::filesystem::path& path, std::span<const Rejection> rejections,
                      std::span<const DocumentFailure> failures) {
  std::vector<json> rows;
  for (const auto& r : rejections) rows.push_back({{"kind", "parse_rejection"}, {"doc_id", r.doc_id}, {"reason", r.reason}});
  for (const auto& f : failures) rows.push_back({{"kind", "document_failure"}, {"doc_id", f.doc_id}, {"reason", f.error}});
  write_jsonl(path, rows);
}

}  // namespace qakit::generation
