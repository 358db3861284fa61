// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/review_service.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/text.hpp"

namespace qakit::review {

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::Accept: return "accept";
    case Verdict::Reject: return "reject";
    case Verdict::Edit: return "edit";
  }
  return "accept";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "accept") return Verdict::Accept;
  if (name == "reject") return Verdict::Reject;
  if (name == "edit") return Verdict::Edit;
  raise(ErrorKind::Parameter, fmt::format("unknown decision '{}' (expected accept, reject or edit)", name));
}

std::string_view to_string(State s) noexcept {
  switch (s) {
    case State::Pending: return "pending";
    case State::Accepted: return "accepted";
    case State::Rejected: return "rejected";
    case State::Edited: return "edited";
  }
  return "pending";
}

json to_json(const ReviewDecision& d) {
  json j{{"pair_id", d.pair_id},
         {"reviewer", d.reviewer},
         {"decision", to_string(d.decision)},
         {"note", d.note},
         {"decided_at", d.decided_at}};
  if (d.edited_question) j["edited_question"] = *d.edited_question;
  if (d.edited_answer) j["edited_answer"] = *d.edited_answer;
  return j;
}

ReviewDecision decision_from_json(const json& j) {
  require(j.is_object(), "decision must be a JSON object");
  ReviewDecision d;
  try {
    d.pair_id = j.at("pair_id").get<std::string>();
    d.reviewer = j.value("reviewer", std::string());
    d.decision = parse_verdict(j.at("decision").get<std::string>());
    auto opt = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<std::string>();
    };
    d.edited_question = opt("edited_question");
    d.edited_answer = opt("edited_answer");
    d.note = j.value("note", std::string());
    d.decided_at = j.value("decided_at", std::string());
  } catch (const json::exception& e) {
    raise(ErrorKind::Parameter, fmt::format("malformed decision: {}", e.what()));
  }
  return d;
}

QAPair ReviewItem::effective_pair() const {
  QAPair p = original;
  if (state == State::Edited && effective) {
    if (effective->edited_question) p.question = *effective->edited_question;
    if (effective->edited_answer) p.answer = *effective->edited_answer;
  }
  return p;
}

json ReviewItem::to_json() const {
  json j{{"pair", json(original)},
         {"state", to_string(state)},
         {"label", label ? json(*label) : json(nullptr)},
         {"effective", json(effective_pair())}};
  j["decision"] = effective ? review::to_json(*effective) : json(nullptr);
  return j;
}

bool Filter::matches(const ReviewItem& item) const {
  if (method && item.original.method != *method) return false;
  if (label && (!item.label || text::to_lower(*item.label) != text::to_lower(*label))) return false;
  if (group && item.original.group_label != *group) return false;
  return true;
}

json Stats::to_json() const {
  return json{{"pending", pending},
              {"accepted", accepted},
              {"rejected", rejected},
              {"edited", edited},
              {"total", total()},
              {"acceptance_rate", acceptance_rate ? json(*acceptance_rate) : json(nullptr)}};
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", now);
}

}  // namespace

ReviewStore::ReviewStore(std::vector<QAPair> pairs, std::filesystem::path history_path,
                         std::map<std::string, std::string> labels)
    : history_path_(std::move(history_path)) {
  sort_by_pair_id(pairs);
  items_.reserve(pairs.size());
  for (auto& p : pairs) {
    if (!index_.emplace(p.pair_id, items_.size()).second) {
      raise(ErrorKind::Conflict, fmt::format("pair {} appears twice in the review store", p.pair_id));
    }
    ReviewItem item;
    if (auto it = labels.find(p.pair_id); it != labels.end()) item.label = it->second;
    item.original = std::move(p);
    items_.push_back(std::move(item));
  }
  if (std::filesystem::exists(history_path_)) {
    for (const auto& row : read_jsonl(history_path_)) {
      auto d = decision_from_json(row);
      if (!index_.contains(d.pair_id)) {
        raise(ErrorKind::Conflict,
              fmt::format("{}: decision for {} which is not in the pair store", history_path_.string(), d.pair_id));
      }
      apply(d);
      history_.push_back(std::move(d));
    }
  }
}

std::size_t ReviewStore::index_of(std::string_view pair_id) const {
  const auto it = index_.find(pair_id);
  if (it == index_.end()) raise(ErrorKind::NotFound, fmt::format("pair {} not found", pair_id));
  return it->second;
}

void ReviewStore::apply(const ReviewDecision& d) {
  auto& item = items_[index_of(d.pair_id)];
  switch (d.decision) {
    case Verdict::Accept: item.state = State::Accepted; break;
    case Verdict::Reject: item.state = State::Rejected; break;
    case Verdict::Edit: item.state = State::Edited; break;
  }
  item.effective = d;
}

std::optional<QAPair> ReviewStore::next_pending(const Filter& filter) const {
  std::shared_lock lock(mutex_);
  for (const auto& item : items_) {
    if (item.state == State::Pending && filter.matches(item)) return item.original;
  }
  return std::nullopt;
}

ReviewItem ReviewStore::get(std::string_view pair_id) const {
  std::shared_lock lock(mutex_);
  return items_[index_of(pair_id)];
}

std::vector<ReviewDecision> ReviewStore::history(std::string_view pair_id) const {
  std::shared_lock lock(mutex_);
  if (pair_id.empty()) return history_;
  std::vector<ReviewDecision> out;
  for (const auto& d : history_) {
    if (d.pair_id == pair_id) out.push_back(d);
  }
  return out;
}

State ReviewStore::submit(ReviewDecision decision) {
  std::unique_lock lock(mutex_);
  const auto& original = items_[index_of(decision.pair_id)].original;
  if (decision.decision == Verdict::Edit) {
    if (!decision.edited_question && !decision.edited_answer) {
      raise(ErrorKind::Parameter, fmt::format("edit of {} carries no edited question or answer", decision.pair_id));
    }
    for (const auto* field : {&decision.edited_question, &decision.edited_answer}) {
      if (*field && text::trim(**field).empty()) {
        raise(ErrorKind::Parameter, fmt::format("edit of {} has empty text", decision.pair_id));
      }
    }
    const bool same_q = !decision.edited_question || *decision.edited_question == original.question;
    const bool same_a = !decision.edited_answer || *decision.edited_answer == original.answer;
    if (same_q && same_a) raise(ErrorKind::Parameter, fmt::format("edit of {} changes nothing", decision.pair_id));
  } else if (decision.edited_question || decision.edited_answer) {
    raise(ErrorKind::Parameter, fmt::format("{} decision cannot carry edited text", to_string(decision.decision)));
  }
  if (decision.decided_at.empty()) decision.decided_at = utc_now();

  if (!history_path_.empty()) {
    if (history_path_.has_parent_path()) std::filesystem::create_directories(history_path_.parent_path());
    std::ofstream out(history_path_, std::ios::binary | std::ios::app);
    out << to_json(decision).dump() << '\n';
    out.flush();
    if (!out) raise(ErrorKind::Io, fmt::format("cannot append to {}", history_path_.string()));
  }
  apply(decision);
  history_.push_back(std::move(decision));
  return items_[index_of(history_.back().pair_id)].state;
}

Stats ReviewStore::stats() const {
  std::shared_lock lock(mutex_);
  Stats s;
  for (const auto& item : items_) {
    switch (item.state) {
      case State::Pending: ++s.pending; break;
      case State::Accepted: ++s.accepted; break;
      case State::Rejected: ++s.rejected; break;
      case State::Edited: ++s.edited; break;
    }
  }
  const std::size_t decided = s.accepted + s.rejected + s.edited;
  if (decided > 0) s.acceptance_rate = static_cast<double>(s.accepted + s.edited) / static_cast<double>(decided);
  return s;
}

std::vector<QAPair> ReviewStore::accepted_pairs() const {
  std::shared_lock lock(mutex_);
  std::vector<QAPair> out;
  for (const auto& item : items_) {
    if (item.state == State::Accepted || item.state == State::Edited) out.push_back(item.effective_pair());
  }
  return out;
}

dataset::DatasetManifest ReviewStore::export_accepted(dataset::ExportFormat format, const std::filesystem::path& path,
                                                      const dataset::ExportOptions& options) const {
  const auto pairs = accepted_pairs();
  if (pairs.empty()) raise(ErrorKind::Parameter, "no accepted or edited pairs to export");
  const std::vector<dataset::Record> records(pairs.begin(), pairs.end());
  return dataset::export_dataset(records, format, path, options);
}

}  // namespace qakit::review
