// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "qakit/errors.hpp"

namespace qakit {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorKind::Io, "write failed for " + path.string());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      raise(ErrorKind::Format,
            path.string() + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
  }
  return out;
}

std::string to_jsonl(const std::vector<json>& values) {
  std::string bytes;
  for (const auto& v : values) {
    bytes += v.dump();
    bytes += '\n';
  }
  return bytes;
}

std::string write_jsonl(const std::filesystem::path& path, const std::vector<json>& values) {
  std::string bytes = to_jsonl(values);
  write_text_file(path, bytes);
  return bytes;
}

json read_json_file(const std::filesystem::path& path) {
  const auto bytes = read_text_file(path);
  try {
    return json::parse(bytes);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::Format, path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

}  // namespace qakit
