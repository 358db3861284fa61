// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/qa_pair.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/text.hpp"

namespace qakit {

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::DNaive: return "d_naive";
    case Method::DRag: return "d_rag";
    case Method::Manual: return "manual";
  }
  return "d_naive";
}

Method parse_method(std::string_view name) {
  if (name == "d_naive") return Method::DNaive;
  if (name == "d_rag") return Method::DRag;
  if (name == "manual") return Method::Manual;
  raise(ErrorKind::Parameter, fmt::format("unknown method '{}' (expected d_naive, d_rag or manual)", name));
}

bool pair_id_less(std::string_view a, std::string_view b) noexcept { return text::natural_less(a, b); }

void sort_by_pair_id(std::vector<QAPair>& pairs) {
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const QAPair& a, const QAPair& b) { return pair_id_less(a.pair_id, b.pair_id); });
}

void to_json(nlohmann::json& j, const QAPair& p) {
  j = nlohmann::json{{"pair_id", p.pair_id},
                     {"question", p.question},
                     {"answer", p.answer},
                     {"method", to_string(p.method)},
                     {"source_doc_ids", p.source_doc_ids},
                     {"group_label", p.group_label},
                     {"created_at", p.created_at}};
}

void from_json(const nlohmann::json& j, QAPair& p) {
  j.at("pair_id").get_to(p.pair_id);
  j.at("question").get_to(p.question);
  j.at("answer").get_to(p.answer);
  p.method = parse_method(j.at("method").get<std::string>());
  p.source_doc_ids = j.value("source_doc_ids", std::vector<std::string>{});
  p.group_label = j.value("group_label", std::string());
  p.created_at = j.value("created_at", std::string());
}

void write_pairs(const std::filesystem::path& path, std::span<const QAPair> pairs) {
  std::vector<json> rows(pairs.begin(), pairs.end());
  write_jsonl(path, rows);
}

std::vector<QAPair> read_pairs(const std::filesystem::path& path) {
  std::vector<QAPair> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<QAPair>());
  return out;
}

}  // namespace qakit
