// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/prompts.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qakit/errors.hpp"

namespace qakit::prompts {
namespace detail {

struct EmbeddedFile {
  const char* name;
  const unsigned char* data;
  std::size_t size;
};

extern const EmbeddedFile kEmbeddedFiles[];
extern const std::size_t kEmbeddedFileCount;

}  // namespace detail

namespace {

std::string_view embedded(std::string_view file) {
  for (std::size_t i = 0; i < detail::kEmbeddedFileCount; ++i) {
    const auto& f = detail::kEmbeddedFiles[i];
    if (file == f.name) return {reinterpret_cast<const char*>(f.data), f.size};
  }
  raise(ErrorKind::Internal, fmt::format("asset file '{}' is not embedded", file));
}

std::vector<Asset> load_assets() {
  const auto manifest = nlohmann::json::parse(embedded("MANIFEST.json"));
  std::vector<Asset> out;
  for (const auto& entry : manifest.at("assets")) {
    Asset a;
    a.name = entry.at("name").get<std::string>();
    a.version = entry.at("version").get<int>();
    a.text = embedded(entry.at("file").get<std::string>());
    a.recorded_sha256 = entry.at("sha256").get<std::string>();
    out.push_back(std::move(a));
  }
  return out;
}

bool identifier_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

const std::vector<Asset>& all_assets() {
  static const std::vector<Asset> assets = load_assets();
  return assets;
}

const Asset& asset(std::string_view name) {
  const auto& assets = all_assets();
  auto it = std::find_if(assets.begin(), assets.end(), [&](const Asset& a) { return a.name == name; });
  if (it == assets.end()) raise(ErrorKind::NotFound, fmt::format("unknown template '{}'", name));
  return *it;
}

std::string render(std::string_view tmpl, const Values& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && identifier_char(tmpl[j])) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        auto it = values.find(tmpl.substr(i + 1, j - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

bool has_placeholder(std::string_view tmpl, std::string_view key) {
  return tmpl.find(fmt::format("{{{}}}", key)) != std::string_view::npos;
}

}  // namespace qakit::prompts
