// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/proctor_eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/parallel.hpp"
#include "qakit/prompts.hpp"
#include "qakit/text.hpp"

namespace qakit::eval {

Rubric Rubric::defaults() {
  Rubric r;
  r.criterion = "Is the response correct, accurate, and factual based on the reference answer?";
  r.descriptions = {
      "The response is completely incorrect, inaccurate, and/or not factual.",
      "The response is mostly incorrect, inaccurate, and/or not factual.",
      "The response is somewhat correct, accurate, and/or factual.",
      "The response is mostly correct, accurate, and/or factual.",
      "The response is completely correct, accurate, and factual.",
  };
  return r;
}

void Rubric::validate() const {
  require(!criterion.empty(), "rubric criterion is empty");
  require(min_score <= max_score, fmt::format("rubric range [{}, {}] is empty", min_score, max_score));
  const auto want = static_cast<std::size_t>(max_score - min_score + 1);
  require(descriptions.size() == want,
          fmt::format("rubric needs {} score descriptions, has {}", want, descriptions.size()));
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    require(!descriptions[i].empty(), fmt::format("rubric description for score {} is empty", min_score + i));
  }
}

std::string Rubric::render() const {
  validate();
  std::string out = criterion;
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    out += fmt::format("\nScore {}: {}", min_score + static_cast<int>(i), descriptions[i]);
  }
  return out;
}

json Rubric::to_json() const {
  return json{{"criterion", criterion}, {"min_score", min_score}, {"max_score", max_score}, {"descriptions", descriptions}};
}

Rubric Rubric::from_json(const json& j) {
  Rubric r;
  r.criterion = j.at("criterion").get<std::string>();
  r.min_score = j.value("min_score", 1);
  r.max_score = j.value("max_score", 5);
  r.descriptions = j.at("descriptions").get<std::vector<std::string>>();
  r.validate();
  return r;
}

std::string build_eval_prompt(std::string_view instruction, std::string_view response, std::string_view reference,
                              const Rubric& rubric) {
  require(!instruction.empty(), "evaluation instruction is empty");
  require(!response.empty(), "response to evaluate is empty");
  require(!reference.empty(), "reference answer is empty");
  return prompts::render(prompts::asset(prompts::kEvaluator).text, {{"instruction", std::string(instruction)},
                                                                    {"response", std::string(response)},
                                                                    {"reference_answer", std::string(reference)},
                                                                    {"rubric", rubric.render()}});
}

ParsedScore parse_score(std::string_view raw, const Rubric& rubric) {
  static constexpr std::string_view kMarker = "[RESULT]";
  const auto at = raw.rfind(kMarker);
  if (at == std::string_view::npos) raise(ErrorKind::Format, "verdict has no [RESULT] marker");

  std::string_view rest = raw.substr(at + kMarker.size());
  auto skip_space = [&] {
    while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
  };
  skip_space();
  if (!rest.empty() && rest.front() == ':') {
    rest.remove_prefix(1);
    skip_space();
  }
  std::size_t len = 0;
  if (len < rest.size() && (rest[len] == '-' || rest[len] == '+')) ++len;
  const std::size_t digits_from = len;
  while (len < rest.size() && std::isdigit(static_cast<unsigned char>(rest[len]))) ++len;
  if (len == digits_from) {
    raise(ErrorKind::Format, fmt::format("no integer after [RESULT] in '{}'", text::trim(rest.substr(0, 20))));
  }
  if (len + 1 < rest.size() && rest[len] == '.' && std::isdigit(static_cast<unsigned char>(rest[len + 1]))) {
    raise(ErrorKind::Format, "score after [RESULT] is not an integer");
  }
  if (len - digits_from > 6) raise(ErrorKind::Range, "score after [RESULT] is out of range");

  const int score = std::stoi(std::string(rest.substr(0, len)));
  if (score < rubric.min_score || score > rubric.max_score) {
    raise(ErrorKind::Range,
          fmt::format("score {} outside rubric range [{}, {}]", score, rubric.min_score, rubric.max_score));
  }
  return {text::trim(raw.substr(0, at)), score};
}

Proctor parse_proctor(std::string_view spec) {
  require(!spec.empty(), "empty proctor spec");
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) return {"mock", std::string(spec)};
  Proctor p{std::string(spec.substr(0, colon)), std::string(spec.substr(colon + 1))};
  require(!p.provider_id.empty() && !p.model_id.empty(), fmt::format("malformed proctor spec '{}'", spec));
  return p;
}

json to_json(const EvaluationRecord& r) {
  return json{{"pair_id", r.pair_id},
              {"dataset_name", r.dataset_name},
              {"proctor_model_id", r.proctor_model_id},
              {"candidate_response", r.candidate_response},
              {"reference_answer", r.reference_answer},
              {"feedback", r.feedback},
              {"score", r.score ? json(*r.score) : json(nullptr)},
              {"raw_output", r.raw_output},
              {"attempts", r.attempts},
              {"error", r.error}};
}

EvaluationRecord record_from_json(const json& j) {
  EvaluationRecord r;
  r.pair_id = j.at("pair_id").get<std::string>();
  r.dataset_name = j.at("dataset_name").get<std::string>();
  r.proctor_model_id = j.at("proctor_model_id").get<std::string>();
  r.candidate_response = j.value("candidate_response", std::string());
  r.reference_answer = j.value("reference_answer", std::string());
  r.feedback = j.value("feedback", std::string());
  if (j.contains("score") && !j.at("score").is_null()) r.score = j.at("score").get<int>();
  r.raw_output = j.value("raw_output", std::string());
  r.attempts = j.value("attempts", 0);
  r.error = j.value("error", std::string());
  return r;
}

void write_records(const std::filesystem::path& path, std::span<const EvaluationRecord> records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

std::vector<EvaluationRecord> read_records(const std::filesystem::path& path) {
  std::vector<EvaluationRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(record_from_json(row));
  return out;
}

std::map<std::string, std::string> read_candidates(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  for (const auto& row : read_jsonl(path)) {
    auto id = row.at("pair_id").get<std::string>();
    if (!out.emplace(id, row.at("response").get<std::string>()).second) {
      raise(ErrorKind::Conflict, fmt::format("{}: duplicate candidate for {}", path.string(), id));
    }
  }
  return out;
}

std::vector<EvaluationRecord> evaluate_dataset(std::span<const QAPair> pairs,
                                               const std::map<std::string, std::string>& candidates,
                                               std::span<const Proctor> proctors, llm::Gateway& gateway,
                                               const EvaluationOptions& options) {
  require(!proctors.empty(), "no proctors given");
  options.rubric.validate();

  std::vector<const QAPair*> ordered;
  ordered.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!candidates.contains(p.pair_id)) {
      raise(ErrorKind::Parameter, fmt::format("no candidate response for pair {}", p.pair_id));
    }
    ordered.push_back(&p);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const QAPair* a, const QAPair* b) { return pair_id_less(a->pair_id, b->pair_id); });

  std::vector<const Proctor*> judges;
  std::set<std::string> seen;
  for (const auto& p : proctors) {
    require(seen.insert(p.model_id).second, fmt::format("proctor {} listed twice", p.model_id));
    judges.push_back(&p);
  }
  std::sort(judges.begin(), judges.end(), [](const Proctor* a, const Proctor* b) { return a->model_id < b->model_id; });

  const std::size_t tasks = ordered.size() * judges.size();
  return parallel_map<EvaluationRecord>(tasks, options.concurrency, [&](std::size_t t) {
    const QAPair& pair = *ordered[t / judges.size()];
    const Proctor& judge = *judges[t % judges.size()];

    EvaluationRecord rec;
    rec.pair_id = pair.pair_id;
    rec.dataset_name = options.dataset_name;
    rec.proctor_model_id = judge.model_id;
    rec.candidate_response = candidates.at(pair.pair_id);
    rec.reference_answer = pair.answer;

    const auto prompt = build_eval_prompt(pair.question, rec.candidate_response, pair.answer, options.rubric);
    std::optional<std::int64_t> seed = options.seed;
    for (int attempt = 1; attempt <= 2; ++attempt) {
      rec.attempts = attempt;
      rec.raw_output = gateway.complete(llm::user_request(judge.provider_id, judge.model_id, prompt, seed)).content;
      try {
        auto parsed = parse_score(rec.raw_output, options.rubric);
        rec.feedback = std::move(parsed.feedback);
        rec.score = parsed.score;
        rec.error.clear();
        break;
      } catch (const Error& e) {
        rec.error = e.what();
      }
      seed = seed.value_or(0) + 1;
    }
    return rec;
  });
}

json ScoreSummary::to_json() const {
  return json{{"dataset_name", dataset_name},
              {"proctor_model_id", proctor_model_id},
              {"n", n},
              {"n_failed", n_failed},
              {"mean", mean},
              {"std", std},
              {"display", n > 0 ? format_cell(mean, std) : std::string()},
              {"histogram", histogram}};
}

namespace {

// Welford's update for mean and sum of squared deviations.
struct Running {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x, std::size_t count = 1) {
    for (std::size_t i = 0; i < count; ++i) {
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
  }
  double sample_std() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

}  // namespace

std::vector<ScoreSummary> summarize_scores(std::span<const EvaluationRecord> records) {
  require(!records.empty(), "no evaluation records to summarize");
  std::map<std::pair<std::string, std::string>, std::pair<ScoreSummary, Running>> groups;
  for (const auto& r : records) {
    auto& [summary, run] = groups[{r.dataset_name, r.proctor_model_id}];
    summary.dataset_name = r.dataset_name;
    summary.proctor_model_id = r.proctor_model_id;
    if (r.failed()) {
      ++summary.n_failed;
      continue;
    }
    if (*r.score < 1 || *r.score > 5) {
      raise(ErrorKind::Range, fmt::format("record {} has score {} outside 1..5", r.pair_id, *r.score));
    }
    ++summary.histogram[static_cast<std::size_t>(*r.score - 1)];
    run.add(*r.score);
  }
  std::vector<ScoreSummary> out;
  out.reserve(groups.size());
  for (auto& [key, group] : groups) {
    auto& [summary, run] = group;
    summary.n = run.n;
    summary.mean = run.mean;
    summary.std = run.sample_std();
    out.push_back(std::move(summary));
  }
  return out;
}

ScoreSummary summary_from_histogram(std::string dataset, std::string proctor,
                                    const std::array<std::size_t, 5>& histogram) {
  ScoreSummary s;
  s.dataset_name = std::move(dataset);
  s.proctor_model_id = std::move(proctor);
  s.histogram = histogram;
  Running run;
  for (std::size_t i = 0; i < histogram.size(); ++i) run.add(static_cast<double>(i + 1), histogram[i]);
  require(run.n > 0, "empty histogram");
  s.n = run.n;
  s.mean = run.mean;
  s.std = run.sample_std();
  return s;
}

std::string format_mean(double mean) { return fmt::format("{:.2f}", mean); }

std::string format_std(double std) {
  auto s = fmt::format("{:.3f}", std);
  if (s.back() == '0') s.pop_back();
  return s;
}

std::string format_cell(double mean, double std) { return format_mean(mean) + " ± " + format_std(std); }

namespace {

// Display width in code points; the cells contain a two-byte "±".
std::size_t display_width(std::string_view s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

void pad_to(std::string& out, std::string_view cell, std::size_t width) {
  out += cell;
  out.append(width - display_width(cell), ' ');
}

}  // namespace

std::string render_table(std::span<const ScoreSummary> summaries, std::vector<std::string> row_order,
                         std::vector<std::string> column_order) {
  require(!summaries.empty(), "no summaries to render");
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  const bool auto_rows = row_order.empty();
  const bool auto_cols = column_order.empty();
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& s : summaries) {
    if (auto_rows) add_unique(row_order, s.dataset_name);
    if (auto_cols) add_unique(column_order, s.proctor_model_id);
    cells[{s.dataset_name, s.proctor_model_id}] = s.n > 0 ? format_cell(s.mean, s.std) : "n/a";
  }

  std::vector<std::vector<std::string>> grid;
  grid.push_back({"Dataset"});
  for (const auto& c : column_order) grid.back().push_back(c);
  for (const auto& r : row_order) {
    grid.push_back({r});
    for (const auto& c : column_order) {
      const auto it = cells.find({r, c});
      grid.back().push_back(it == cells.end() ? "-" : it->second);
    }
  }
  std::vector<std::size_t> widths(column_order.size() + 1, 0);
  for (const auto& row : grid) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], display_width(row[i]));
  }

  std::string out;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      if (i > 0) line += " | ";
      pad_to(line, grid[r][i], widths[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 0) {
      std::string rule;
      for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i > 0) rule += "-+-";
        rule.append(widths[i], '-');
      }
      out += rule + "\n";
    }
  }
  return out;
}

bool exact_match(std::string_view expected, std::string_view predicted) {
  return text::normalize_for_match(expected) == text::normalize_for_match(predicted);
}

double exact_match_accuracy(std::span<const std::pair<std::string, std::string>> records) {
  require(!records.empty(), "no records for exact-match accuracy");
  std::size_t hits = 0;
  for (const auto& [expected, predicted] : records) hits += exact_match(expected, predicted);
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<HistogramRow> score_histogram(std::span<const EvaluationRecord> records) {
  require(!records.empty(), "no evaluation records for a histogram");
  std::vector<HistogramRow> out;
  for (const auto& s : summarize_scores(records)) {
    out.push_back({s.dataset_name, s.proctor_model_id, s.histogram, s.n});
  }
  return out;
}

std::string histogram_csv(std::span<const HistogramRow> rows) {
  std::string out = "dataset,proctor,score_1,score_2,score_3,score_4,score_5,n\n";
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
  };
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{}\n", field(r.dataset_name), field(r.proctor_model_id), fmt::join(r.counts, ","), r.n);
  }
  return out;
}

json histogram_json(std::span<const HistogramRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"dataset", r.dataset_name}, {"proctor", r.proctor_model_id}, {"counts", r.counts}, {"n", r.n}});
  }
  return out;
}

}  // namespace qakit::eval
