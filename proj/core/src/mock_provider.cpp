// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/mock_provider.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/text.hpp"

namespace qakit::llm {
namespace {

constexpr std::string_view kGenerationMarker = "question-answer pairs grounded in the document below";
constexpr std::string_view kRagMarker = "Answer the question using the retrieved context below.";
constexpr std::string_view kAnnotationMarker = "Classify the question-answer pair below as Factual or Conceptual.";
constexpr std::string_view kEvaluatorMarker = "Task Description:\nAn instruction (might include an Input inside it)";

std::string section(std::string_view s, std::string_view begin, std::string_view end) {
  const auto b = s.find(begin);
  if (b == std::string_view::npos) return {};
  const auto from = b + begin.size();
  const auto e = end.empty() ? std::string_view::npos : s.find(end, from);
  return std::string(s.substr(from, e == std::string_view::npos ? std::string_view::npos : e - from));
}

std::string line_after(std::string_view s, std::string_view label) {
  const auto b = s.find(label);
  if (b == std::string_view::npos) return {};
  const auto from = b + label.size();
  const auto e = s.find('\n', from);
  return text::trim(s.substr(from, e == std::string_view::npos ? std::string_view::npos : e - from));
}

std::uint64_t seed_of(const ChatRequest& r) {
  return r.request_seed ? static_cast<std::uint64_t>(*r.request_seed) : 0ULL;
}

std::string pick_keyword(std::string_view sentence, std::uint64_t h) {
  std::vector<std::string> candidates;
  for (auto& t : text::tokens(sentence))
    if (t.size() >= 5 && std::none_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }))
      candidates.push_back(std::move(t));
  if (candidates.empty()) {
    auto all = text::tokens(sentence);
    return all.empty() ? std::string("topic") : all.front();
  }
  return candidates[h % candidates.size()];
}

std::string generation_reply(const ChatRequest& r, std::string_view prompt) {
  static const std::regex kCount(R"(Generate (\d+) question-answer pairs)");
  std::match_results<std::string_view::const_iterator> m;
  std::size_t n = 3;
  if (std::regex_search(prompt.begin(), prompt.end(), m, kCount)) n = std::stoul(m[1].str());

  const auto document = text::trim(section(prompt, "Document:\n", ""));
  auto sentences = text::split_sentences(document);
  sentences.erase(std::remove_if(sentences.begin(), sentences.end(),
                                 [](const std::string& s) { return text::word_count(s) < 4; }),
                  sentences.end());
  if (sentences.empty()) sentences.push_back(text::collapse_whitespace(document));

  const auto title_tokens = text::tokens(document.substr(0, document.find('\n')));
  std::string topic = "this domain";
  for (const auto& t : title_tokens)
    if (t.size() >= 4) {
      topic = t;
      break;
    }

  static constexpr std::string_view kForms[] = {
      "What is the role of {kw} in {topic}?",
      "How many {kw} entries are listed for {topic}?",
      "Why is {kw} important for {topic}?",
      "Which {kw} detail is stated for {topic}?",
      "How does {kw} relate to {topic}?",
      "When is {kw} mentioned in the {topic} material?",
  };

  const auto base = fnv1a64(document) ^ (seed_of(r) * 0x9e3779b97f4a7c15ULL);
  const bool tagged = prompt.find("JSON array") == std::string_view::npos;
  std::set<std::string> seen;
  nlohmann::json arr = nlohmann::json::array();
  std::string lines;
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(base + i);
    const auto& sentence = sentences[(base + i) % sentences.size()];
    const auto kw = pick_keyword(sentence, rng.next());
    const auto form = kForms[(base / 7 + i) % std::size(kForms)];
    auto q = text::replace_all(text::replace_all(form, "{kw}", kw), "{topic}", topic);
    if (!seen.insert(q).second) {
      q.pop_back();
      q += fmt::format(" (detail {})?", i + 1);
      seen.insert(q);
    }
    const auto a = fmt::format("Regarding {}: {}", topic, sentence);
    if (tagged) {
      lines += fmt::format("{}Q: {}\nA: {}\n", i ? "\n" : "", q, a);
    } else {
      arr.push_back({{"question", q}, {"answer", a}});
    }
  }
  return tagged ? lines : arr.dump(2);
}

std::string rag_reply(std::string_view prompt) {
  const auto question = line_after(prompt, "Question: ");
  const auto context = section(prompt, "Context:\n", "\n\nAnswer:");
  static const std::regex kPassage(R"(\[(\d+)\] ([^\n]*))");
  std::vector<std::string> firsts;
  for (std::regex_iterator<std::string::const_iterator> it(context.begin(), context.end(), kPassage), end;
       it != end && firsts.size() < 2; ++it) {
    auto sentences = text::split_sentences((*it)[2].str());
    if (!sentences.empty()) firsts.push_back(sentences.front());
  }
  if (firsts.empty()) return fmt::format("No retrieved passage addresses: {}", question);
  std::string answer = "Drawing on the retrieved passages: " + firsts.front();
  if (firsts.size() > 1) answer += " " + firsts[1];
  return answer;
}

std::string annotation_reply(std::string_view prompt) {
  const auto at = prompt.rfind("\nQuestion: ");
  const auto question = at == std::string_view::npos ? std::string() : line_after(prompt.substr(at), "Question: ");
  return looks_conceptual(question) ? "Conceptual" : "Factual";
}

double token_f1(std::string_view a, std::string_view b) {
  auto ta = text::tokens(a), tb = text::tokens(b);
  if (ta.empty() || tb.empty()) return 0.0;
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<std::string> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
  if (common.empty()) return 0.0;
  const double p = static_cast<double>(common.size()) / static_cast<double>(ta.size());
  const double rc = static_cast<double>(common.size()) / static_cast<double>(tb.size());
  return 2.0 * p * rc / (p + rc);
}

std::string evaluator_reply(std::string_view prompt) {
  const auto response = section(prompt, "Response to evaluate: ", "\n \nReference Answer (Score 5): ");
  const auto reference = section(prompt, "Reference Answer (Score 5): ", "\n \nScore Rubrics:");
  const double f1 = token_f1(response, reference);
  const int score = std::clamp(1 + static_cast<int>(std::lround(f1 * 4.0)), 1, 5);
  return fmt::format("Feedback: The response shares {:.0f}% of its content with the reference answer. [RESULT] {}",
                     f1 * 100.0, score);
}

std::string generic_reply(const ChatRequest& r, std::string_view prompt) {
  const auto words = text::word_spans(prompt);
  const std::size_t take = std::min<std::size_t>(words.size(), 16);
  std::string echo = take ? std::string(prompt.substr(0, words[take - 1].end)) : std::string();
  const auto h = fnv1a64(fmt::format("{}\x1f{}\x1f{}", r.model_id, prompt, seed_of(r)));
  return fmt::format("[{}:{:08x}] {}", r.model_id, h & 0xffffffffULL, text::collapse_whitespace(echo));
}

}  // namespace

bool looks_conceptual(std::string_view question) {
  const auto q = text::collapse_whitespace(text::to_lower(question));
  for (std::string_view factual : {"how many", "how much", "when ", "where ", "which ", "who ", "what year", "what date"})
    if (q.starts_with(factual)) return false;
  for (std::string_view conceptual : {"what is", "what are", "what does", "why", "how does", "how do",
                                      "how is", "how can", "explain", "describe", "what role"})
    if (q.starts_with(conceptual)) return true;
  return false;
}

Embedding mock_embedding(std::string_view text, std::size_t dimension) {
  if (dimension == 0) raise(ErrorKind::Parameter, "embedding dimension must be positive");
  Embedding v(dimension, 0.0);
  auto toks = text::tokens(text);
  if (toks.empty()) toks.emplace_back(text);
  for (const auto& t : toks) {
    SplitMix64 rng(fnv1a64(t));
    for (auto& x : v) x += rng.normal();
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::string mock_reply(const ChatRequest& r) {
  validate(r);
  const std::string& prompt = r.messages.back().content;
  if (prompt.find(kGenerationMarker) != std::string::npos) return generation_reply(r, prompt);
  if (prompt.starts_with(kRagMarker)) return rag_reply(prompt);
  if (prompt.starts_with(kAnnotationMarker)) return annotation_reply(prompt);
  if (prompt.starts_with(kEvaluatorMarker)) return evaluator_reply(prompt);
  return generic_reply(r, prompt);
}

MockProvider::MockProvider(std::size_t embedding_dimension) : dimension_(embedding_dimension) {
  if (dimension_ == 0) raise(ErrorKind::Parameter, "embedding dimension must be positive");
}

ChatResponse MockProvider::complete(const ChatRequest& request) {
  ChatResponse r;
  r.content = mock_reply(request);
  for (const auto& m : request.messages) r.prompt_tokens += text::word_count(m.content);
  r.completion_tokens = text::word_count(r.content);
  r.provider_echo = {{"provider", "mock"}, {"model", request.model_id}};
  return r;
}

std::vector<Embedding> MockProvider::embed(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embedding(t, dimension_));
  return out;
}

}  // namespace qakit::llm
