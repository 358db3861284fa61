// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qakit/dataset_builder.hpp"
#include "qakit/qa_pair.hpp"

namespace qakit::review {

enum class Verdict { Accept, Reject, Edit };
enum class State { Pending, Accepted, Rejected, Edited };

std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view name);
std::string_view to_string(State s) noexcept;

struct ReviewDecision {
  std::string pair_id;
  std::string reviewer;
  Verdict decision = Verdict::Accept;
  std::optional<std::string> edited_question;
  std::optional<std::string> edited_answer;
  std::string note;
  /// Filled with the current UTC time on submit when empty.
  std::string decided_at;

  bool operator==(const ReviewDecision&) const = default;
};

nlohmann::json to_json(const ReviewDecision& d);
ReviewDecision decision_from_json(const nlohmann::json& j);

struct ReviewItem {
  QAPair original;
  std::optional<std::string> label;
  State state = State::Pending;
  std::optional<ReviewDecision> effective;

  /// The original with edited text applied, if any.
  QAPair effective_pair() const;
  nlohmann::json to_json() const;
};

struct Filter {
  std::optional<Method> method;
  std::optional<std::string> label;
  std::optional<std::string> group;

  bool matches(const ReviewItem& item) const;
};

struct Stats {
  std::size_t pending = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t edited = 0;
  /// (accepted + edited) / decided; none until something is decided.
  std::optional<double> acceptance_rate;

  std::size_t total() const noexcept { return pending + accepted + rejected + edited; }
  nlohmann::json to_json() const;
  bool operator==(const Stats&) const = default;
};

/// Pair store plus an append-only JSON-Lines decision history. The latest
/// decision per pair is effective; constructing a store over an existing
/// history replays it. Reads take a shared lock, submits an exclusive one.
class ReviewStore {
 public:
  /// `labels` maps pair ids to "factual"/"conceptual" for filtering.
  ReviewStore(std::vector<QAPair> pairs, std::filesystem::path history_path,
              std::map<std::string, std::string> labels = {});

  std::optional<QAPair> next_pending(const Filter& filter = {}) const;
  /// Unknown ids raise NotFound.
  ReviewItem get(std::string_view pair_id) const;
  std::vector<ReviewDecision> history(std::string_view pair_id = {}) const;

  /// Appends to the history file and updates the effective state.
  State submit(ReviewDecision decision);

  Stats stats() const;
  /// Accepted and edited pairs (edited text applied), in pair id order.
  std::vector<QAPair> accepted_pairs() const;
  dataset::DatasetManifest export_accepted(dataset::ExportFormat format, const std::filesystem::path& path,
                                           const dataset::ExportOptions& options = {}) const;

  std::size_t size() const noexcept { return items_.size(); }

 private:
  void apply(const ReviewDecision& d);
  std::size_t index_of(std::string_view pair_id) const;

  mutable std::shared_mutex mutex_;
  std::vector<ReviewItem> items_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<ReviewDecision> history_;
  std::filesystem::path history_path_;
};

}  // namespace qakit::review
