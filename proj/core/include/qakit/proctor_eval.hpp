// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/llm_gateway.hpp"
#include "qakit/qa_pair.hpp"

namespace qakit::eval {

struct Rubric {
  std::string criterion;
  int min_score = 1;
  int max_score = 5;
  /// One description per score, min_score first.
  std::vector<std::string> descriptions;

  /// Correctness rubric used by every proctor.
  static Rubric defaults();
  void validate() const;
  /// Criterion line followed by "Score k: ..." lines.
  std::string render() const;

  nlohmann::json to_json() const;
  static Rubric from_json(const nlohmann::json& j);
};

/// Fills the evaluator template. All three texts must be non-empty.
std::string build_eval_prompt(std::string_view instruction, std::string_view response, std::string_view reference,
                              const Rubric& rubric = Rubric::defaults());

struct ParsedScore {
  std::string feedback;
  int score = 0;
};

/// Feedback is the trimmed text before the last "[RESULT]"; the score is the
/// integer after it. Missing marker or a non-integer raises Format, a score
/// outside the rubric raises Range.
ParsedScore parse_score(std::string_view raw, const Rubric& rubric = Rubric::defaults());

struct Proctor {
  std::string provider_id;
  std::string model_id;
};

/// Parses "provider:model" or a bare model id (provider defaults to "mock").
Proctor parse_proctor(std::string_view spec);

struct EvaluationRecord {
  std::string pair_id;
  std::string dataset_name;
  std::string proctor_model_id;
  std::string candidate_response;
  std::string reference_answer;
  std::string feedback;
  std::optional<int> score;
  std::string raw_output;
  int attempts = 0;
  /// Parse error of the last attempt for failed records.
  std::string error;

  bool failed() const noexcept { return !score.has_value(); }
  bool operator==(const EvaluationRecord&) const = default;
};

nlohmann::json to_json(const EvaluationRecord& r);
EvaluationRecord record_from_json(const nlohmann::json& j);
void write_records(const std::filesystem::path& path, std::span<const EvaluationRecord> records);
std::vector<EvaluationRecord> read_records(const std::filesystem::path& path);

/// Candidate responses keyed by pair id, from JSON-Lines rows carrying
/// "pair_id" and "response".
std::map<std::string, std::string> read_candidates(const std::filesystem::path& path);

struct EvaluationOptions {
  std::string dataset_name = "test";
  std::optional<std::int64_t> seed;
  std::size_t concurrency = 4;
  Rubric rubric = Rubric::defaults();
};

/// One record per (pair, proctor), sorted by (pair_id, proctor). A verdict
/// that fails to parse is re-asked once with seed + 1; if that fails too the
/// record is kept as failed with the raw output.
std::vector<EvaluationRecord> evaluate_dataset(std::span<const QAPair> pairs,
                                               const std::map<std::string, std::string>& candidates,
                                               std::span<const Proctor> proctors, llm::Gateway& gateway,
                                               const EvaluationOptions& options = {});

struct ScoreSummary {
  std::string dataset_name;
  std::string proctor_model_id;
  std::size_t n = 0;
  std::size_t n_failed = 0;
  double mean = 0.0;
  /// Sample standard deviation; 0 when n == 1.
  double std = 0.0;
  std::array<std::size_t, 5> histogram{};

  nlohmann::json to_json() const;
};

/// Groups by (dataset, proctor) in lexicographic order. Failed records are
/// counted in n_failed and excluded from the statistics.
std::vector<ScoreSummary> summarize_scores(std::span<const EvaluationRecord> records);

/// Summary of a known score histogram (counts for 1..5).
ScoreSummary summary_from_histogram(std::string dataset, std::string proctor,
                                    const std::array<std::size_t, 5>& histogram);

std::string format_mean(double mean);
/// Three decimals with trailing zeros dropped, keeping at least two.
std::string format_std(double std);
/// "3.93 ± 1.073"
std::string format_cell(double mean, double std);

/// Aligned text grid: one row per dataset, one column per proctor. Empty
/// orders fall back to first appearance in `summaries`.
std::string render_table(std::span<const ScoreSummary> summaries, std::vector<std::string> row_order = {},
                         std::vector<std::string> column_order = {});

/// Lowercase, collapsed whitespace, terminal punctuation stripped.
bool exact_match(std::string_view expected, std::string_view predicted);
double exact_match_accuracy(std::span<const std::pair<std::string, std::string>> records);

struct HistogramRow {
  std::string dataset_name;
  std::string proctor_model_id;
  std::array<std::size_t, 5> counts{};
  std::size_t n = 0;
};

std::vector<HistogramRow> score_histogram(std::span<const EvaluationRecord> records);
/// Header "dataset,proctor,score_1,...,score_5,n".
std::string histogram_csv(std::span<const HistogramRow> rows);
nlohmann::json histogram_json(std::span<const HistogramRow> rows);

}  // namespace qakit::eval
