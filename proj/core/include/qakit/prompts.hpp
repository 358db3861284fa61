// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qakit::prompts {

/// A prompt or record template shipped with the library. Assets are
/// versioned by file name (name.vN.txt) and their SHA-256 is committed in
/// assets/MANIFEST.json so template drift is detectable.
struct Asset {
  std::string name;
  int version = 0;
  std::string_view text;
  std::string recorded_sha256;
};

const Asset& asset(std::string_view name);
const std::vector<Asset>& all_assets();

using Values = std::map<std::string, std::string, std::less<>>;

/// Single-pass substitution of {key} placeholders. Braces that do not name
/// a key in `values` are copied through untouched, and substituted text is
/// never rescanned.
std::string render(std::string_view tmpl, const Values& values);

/// True when `{key}` occurs in the template.
bool has_placeholder(std::string_view tmpl, std::string_view key);

inline constexpr std::string_view kGenerationJson = "generation_json";
inline constexpr std::string_view kGenerationTagged = "generation_tagged";
inline constexpr std::string_view kRagAnswer = "rag_answer";
inline constexpr std::string_view kAnnotation = "annotation";
inline constexpr std::string_view kEvaluator = "evaluator";
inline constexpr std::string_view kInstructPrompt = "instruct_prompt";
inline constexpr std::string_view kInstructCompletion = "instruct_completion";

}  // namespace qakit::prompts
