// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qakit {

enum class Method { DNaive, DRag, Manual };

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view name);

struct QAPair {
  std::string pair_id;
  std::string question;
  std::string answer;
  Method method = Method::DNaive;
  std::vector<std::string> source_doc_ids;
  std::string group_label;
  std::string created_at;

  bool operator==(const QAPair&) const = default;
};

/// Pair ids order naturally ("p2" before "p10"). Dedupe precedence and the
/// review queue both follow this order.
bool pair_id_less(std::string_view a, std::string_view b) noexcept;

void sort_by_pair_id(std::vector<QAPair>& pairs);

void to_json(nlohmann::json& j, const QAPair& p);
void from_json(const nlohmann::json& j, QAPair& p);

void write_pairs(const std::filesystem::path& path, std::span<const QAPair> pairs);
std::vector<QAPair> read_pairs(const std::filesystem::path& path);

}  // namespace qakit
