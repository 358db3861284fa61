// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace qakit::text {

struct WordSpan {
  std::size_t begin;
  std::size_t end;
};

bool is_space(char c) noexcept;

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);

/// Lowercase, collapse runs of whitespace to one space, trim, and strip
/// trailing punctuation (.?!,;:). Used for question dedupe and exact-match
/// scoring.
std::string normalize_for_match(std::string_view s);

/// Byte ranges of whitespace-delimited words, in order.
std::vector<WordSpan> word_spans(std::string_view s);

std::size_t word_count(std::string_view s);

/// Lowercase alphanumeric tokens; everything else separates.
std::vector<std::string> tokens(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

/// Natural ordering for identifiers: digit runs compare numerically, so
/// "p2" < "p10". Ties fall back to plain lexicographic order.
bool natural_less(std::string_view a, std::string_view b) noexcept;

std::vector<std::string> split_sentences(std::string_view s);

}  // namespace qakit::text
