// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qakit {

using json = nlohmann::json;

/// Reads one JSON value per non-empty line. Malformed lines raise a Format
/// error carrying the 1-based line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes values one per line (compact dump, trailing newline) and returns
/// the exact bytes written.
std::string write_jsonl(const std::filesystem::path& path, const std::vector<json>& values);

std::string to_jsonl(const std::vector<json>& values);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace qakit
