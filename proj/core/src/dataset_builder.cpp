// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/dataset_builder.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "qakit/checksum.hpp"
#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/prompts.hpp"

namespace qakit::dataset {

std::string_view to_string(TaskTag tag) noexcept {
  switch (tag) {
    case TaskTag::ProductRecommendation: return "product_recommendation";
    case TaskTag::CallTranscriptNextSteps: return "call_transcript_next_steps";
    case TaskTag::SalesPitch: return "sales_pitch";
    case TaskTag::Generic: return "generic";
  }
  return "generic";
}

TaskTag parse_task_tag(std::string_view name) {
  if (name == "product_recommendation") return TaskTag::ProductRecommendation;
  if (name == "call_transcript_next_steps") return TaskTag::CallTranscriptNextSteps;
  if (name == "sales_pitch") return TaskTag::SalesPitch;
  if (name == "generic") return TaskTag::Generic;
  raise(ErrorKind::Parameter, fmt::format("unknown task tag '{}'", name));
}

const std::string& record_id(const Record& r) {
  return std::visit([](const auto& v) -> const std::string& { return v.pair_id; }, r);
}

const std::string& instruction_of(const Record& r) {
  if (const auto* qa = std::get_if<QAPair>(&r)) return qa->question;
  return std::get<PromptResponsePair>(r).prompt;
}

const std::string& response_of(const Record& r) {
  if (const auto* qa = std::get_if<QAPair>(&r)) return qa->answer;
  return std::get<PromptResponsePair>(r).response;
}

namespace {

constexpr std::string_view kSupported = "qa_jsonl, instruct_template_jsonl, prompt_response_jsonl";

// Template text split around its single placeholder.
struct Frame {
  std::string prefix;
  std::string suffix;
};

Frame frame_of(std::string_view asset_name, std::string_view key) {
  const std::string tmpl(prompts::asset(asset_name).text);
  const std::string marker = fmt::format("{{{}}}", key);
  const auto at = tmpl.find(marker);
  if (at == std::string::npos) {
    raise(ErrorKind::Internal, fmt::format("template {} lacks {}", asset_name, marker));
  }
  return {tmpl.substr(0, at), tmpl.substr(at + marker.size())};
}

const Frame& prompt_frame() {
  static const Frame f = frame_of(prompts::kInstructPrompt, "instruction");
  return f;
}

const Frame& completion_frame() {
  static const Frame f = frame_of(prompts::kInstructCompletion, "response");
  return f;
}

std::optional<std::string> unframe(const std::string& s, const Frame& f) {
  if (s.size() < f.prefix.size() + f.suffix.size()) return std::nullopt;
  if (s.compare(0, f.prefix.size(), f.prefix) != 0) return std::nullopt;
  if (s.compare(s.size() - f.suffix.size(), f.suffix.size(), f.suffix) != 0) return std::nullopt;
  return s.substr(f.prefix.size(), s.size() - f.prefix.size() - f.suffix.size());
}

json qa_meta(const QAPair& p) {
  return json{{"kind", "qa"},
              {"method", to_string(p.method)},
              {"source_doc_ids", p.source_doc_ids},
              {"group_label", p.group_label},
              {"created_at", p.created_at}};
}

void apply_qa_meta(const json& meta, QAPair& p) {
  p.method = parse_method(meta.at("method").get<std::string>());
  p.source_doc_ids = meta.value("source_doc_ids", std::vector<std::string>{});
  p.group_label = meta.value("group_label", std::string());
  p.created_at = meta.value("created_at", std::string());
}

json record_json(const Record& record, ExportFormat format) {
  switch (format) {
    case ExportFormat::QaJsonl: {
      const auto* qa = std::get_if<QAPair>(&record);
      if (qa == nullptr) {
        raise(ErrorKind::Parameter,
              fmt::format("record {} is a prompt/response pair; qa_jsonl holds QA pairs only", record_id(record)));
      }
      return json(*qa);
    }
    case ExportFormat::PromptResponseJsonl: {
      if (const auto* qa = std::get_if<QAPair>(&record)) {
        return json{{"pair_id", qa->pair_id},
                    {"prompt", qa->question},
                    {"response", qa->answer},
                    {"task_tag", to_string(TaskTag::Generic)},
                    {"meta", qa_meta(*qa)}};
      }
      const auto& pr = std::get<PromptResponsePair>(record);
      return json{{"pair_id", pr.pair_id},
                  {"prompt", pr.prompt},
                  {"response", pr.response},
                  {"task_tag", to_string(pr.task_tag)}};
    }
    case ExportFormat::InstructTemplateJsonl: {
      const auto& pf = prompt_frame();
      const auto& cf = completion_frame();
      json meta;
      if (const auto* qa = std::get_if<QAPair>(&record)) {
        meta = qa_meta(*qa);
      } else {
        meta = json{{"kind", "prompt_response"},
                    {"task_tag", to_string(std::get<PromptResponsePair>(record).task_tag)}};
      }
      return json{{"pair_id", record_id(record)},
                  {"prompt", pf.prefix + instruction_of(record) + pf.suffix},
                  {"completion", cf.prefix + response_of(record) + cf.suffix},
                  {"meta", std::move(meta)}};
    }
  }
  raise(ErrorKind::Internal, "unhandled export format");
}

Record record_from_json(const json& j, ExportFormat format) {
  switch (format) {
    case ExportFormat::QaJsonl:
      return j.get<QAPair>();
    case ExportFormat::PromptResponseJsonl: {
      if (j.contains("meta") && j.at("meta").value("kind", "") == "qa") {
        QAPair p;
        p.pair_id = j.at("pair_id").get<std::string>();
        p.question = j.at("prompt").get<std::string>();
        p.answer = j.at("response").get<std::string>();
        apply_qa_meta(j.at("meta"), p);
        return p;
      }
      PromptResponsePair pr;
      pr.pair_id = j.at("pair_id").get<std::string>();
      pr.prompt = j.at("prompt").get<std::string>();
      pr.response = j.at("response").get<std::string>();
      pr.task_tag = parse_task_tag(j.value("task_tag", std::string("generic")));
      return pr;
    }
    case ExportFormat::InstructTemplateJsonl: {
      const std::string id = j.at("pair_id").get<std::string>();
      auto instruction = unframe(j.at("prompt").get<std::string>(), prompt_frame());
      auto response = unframe(j.at("completion").get<std::string>(), completion_frame());
      if (!instruction || !response) {
        raise(ErrorKind::Format, fmt::format("record {} does not follow the instruction template", id));
      }
      const json meta = j.value("meta", json::object());
      if (meta.value("kind", "") == "qa") {
        QAPair p;
        p.pair_id = id;
        p.question = std::move(*instruction);
        p.answer = std::move(*response);
        apply_qa_meta(meta, p);
        return p;
      }
      PromptResponsePair pr;
      pr.pair_id = id;
      pr.prompt = std::move(*instruction);
      pr.response = std::move(*response);
      pr.task_tag = parse_task_tag(meta.value("task_tag", std::string("generic")));
      return pr;
    }
  }
  raise(ErrorKind::Internal, "unhandled export format");
}

std::vector<std::string_view> required_fields(ExportFormat format) {
  switch (format) {
    case ExportFormat::QaJsonl: return {"pair_id", "question", "answer", "method"};
    case ExportFormat::PromptResponseJsonl: return {"pair_id", "prompt", "response", "task_tag"};
    case ExportFormat::InstructTemplateJsonl: return {"pair_id", "prompt", "completion"};
  }
  return {};
}

std::string split_checksum(const std::vector<Record>& train, const std::vector<Record>& test) {
  std::string bytes;
  for (const auto* part : {&train, &test}) {
    for (const auto& r : *part) {
      bytes += record_json(r, ExportFormat::PromptResponseJsonl).dump();
      bytes += '\n';
    }
    bytes += "\x1e";
  }
  return sha256_hex(bytes);
}

std::string derive_method_tag(std::span<const Record> records) {
  std::set<std::string> tags;
  for (const auto& r : records) {
    if (const auto* qa = std::get_if<QAPair>(&r)) {
      tags.emplace(to_string(qa->method));
    } else {
      tags.emplace("prompt_response");
    }
  }
  return tags.size() == 1 ? *tags.begin() : std::string("mixed");
}

}  // namespace

std::string_view to_string(ExportFormat format) noexcept {
  switch (format) {
    case ExportFormat::QaJsonl: return "qa_jsonl";
    case ExportFormat::InstructTemplateJsonl: return "instruct_template_jsonl";
    case ExportFormat::PromptResponseJsonl: return "prompt_response_jsonl";
  }
  return "qa_jsonl";
}

ExportFormat parse_export_format(std::string_view name) {
  if (name == "qa_jsonl") return ExportFormat::QaJsonl;
  if (name == "instruct_template_jsonl") return ExportFormat::InstructTemplateJsonl;
  if (name == "prompt_response_jsonl") return ExportFormat::PromptResponseJsonl;
  raise(ErrorKind::Parameter, fmt::format("unknown export format '{}' (supported: {})", name, kSupported));
}

json DatasetManifest::to_json() const {
  json j{{"name", name},
         {"method_tag", method_tag},
         {"record_count", record_count},
         {"train_count", train_count},
         {"test_count", test_count},
         {"split_seed", split_seed ? json(*split_seed) : json(nullptr)},
         {"export_format", export_format},
         {"content_checksum", content_checksum},
         {"created_at", created_at}};
  if (template_sha256) j["template_sha256"] = *template_sha256;
  return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  DatasetManifest m;
  m.name = j.at("name").get<std::string>();
  m.method_tag = j.at("method_tag").get<std::string>();
  m.record_count = j.at("record_count").get<std::size_t>();
  m.train_count = j.value("train_count", std::size_t{0});
  m.test_count = j.value("test_count", std::size_t{0});
  if (j.contains("split_seed") && !j.at("split_seed").is_null()) m.split_seed = j.at("split_seed").get<std::uint64_t>();
  m.export_format = j.value("export_format", std::string());
  m.content_checksum = j.at("content_checksum").get<std::string>();
  m.created_at = j.value("created_at", std::string());
  if (j.contains("template_sha256")) m.template_sha256 = j.at("template_sha256").get<std::string>();
  return m;
}

SplitResult split_train_test(std::span<const Record> records, std::size_t test_size, std::uint64_t seed,
                             std::string name, std::string method_tag, std::string created_at) {
  if (test_size == 0 || test_size >= records.size()) {
    raise(ErrorKind::Parameter,
          fmt::format("test_size must be in (0, {}) for {} records, got {}", records.size(), records.size(),
                      test_size));
  }
  const auto perm = seeded_permutation(records.size(), seed);
  std::vector<char> in_test(records.size(), 0);
  for (std::size_t i = 0; i < test_size; ++i) in_test[perm[i]] = 1;

  SplitResult out;
  out.train.reserve(records.size() - test_size);
  out.test.reserve(test_size);
  for (std::size_t i = 0; i < records.size(); ++i) (in_test[i] ? out.test : out.train).push_back(records[i]);

  auto& m = out.manifest;
  m.name = std::move(name);
  m.method_tag = method_tag.empty() ? derive_method_tag(records) : std::move(method_tag);
  m.record_count = records.size();
  m.train_count = out.train.size();
  m.test_count = out.test.size();
  m.split_seed = seed;
  m.content_checksum = split_checksum(out.train, out.test);
  m.created_at = std::move(created_at);
  return out;
}

std::vector<Record> sample_records(std::span<const Record> records, std::size_t n, std::uint64_t seed) {
  if (n > records.size()) {
    raise(ErrorKind::Parameter, fmt::format("cannot sample {} of {} records", n, records.size()));
  }
  auto perm = seeded_permutation(records.size(), seed);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  std::vector<Record> out;
  out.reserve(n);
  for (auto i : perm) out.push_back(records[i]);
  return out;
}

std::string render_record(const Record& record, ExportFormat format) { return record_json(record, format).dump(); }

DatasetManifest export_dataset(std::span<const Record> records, ExportFormat format,
                               const std::filesystem::path& path, const ExportOptions& options) {
  std::string bytes;
  for (const auto& r : records) {
    bytes += render_record(r, format);
    bytes += '\n';
  }
  write_text_file(path, bytes);

  DatasetManifest m;
  m.name = options.name;
  m.method_tag = options.method_tag.empty() ? derive_method_tag(records) : options.method_tag;
  m.record_count = records.size();
  (options.role == SplitRole::Train ? m.train_count : m.test_count) = records.size();
  m.split_seed = options.split_seed;
  m.export_format = std::string(to_string(format));
  m.content_checksum = sha256_hex(bytes);
  m.created_at = options.created_at;
  if (format == ExportFormat::InstructTemplateJsonl) {
    m.template_sha256 = sha256_hex(std::string(prompts::asset(prompts::kInstructPrompt).text) +
                                   std::string(prompts::asset(prompts::kInstructCompletion).text));
  }
  return m;
}

std::vector<Record> import_dataset(const std::filesystem::path& path, ExportFormat format) {
  const auto rows = read_jsonl(path);
  std::vector<Record> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(record_from_json(rows[i], format));
    } catch (const json::exception& e) {
      raise(ErrorKind::Format, fmt::format("{}: record {}: {}", path.string(), i + 1, e.what()));
    }
  }
  return out;
}

json ValidationReport::to_json() const {
  json empties = json::array();
  for (const auto& v : empty_fields) empties.push_back({{"line", v.line}, {"field", v.field}});
  json dups = json::array();
  for (const auto& d : duplicate_ids) {
    dups.push_back({{"pair_id", d.pair_id}, {"first_line", d.first_line}, {"line", d.line}});
  }
  return json{{"line_count", line_count},
              {"valid", valid()},
              {"violation_count", violation_count()},
              {"parse_failures", parse_failures},
              {"empty_fields", std::move(empties)},
              {"duplicate_ids", std::move(dups)}};
}

ValidationReport validate_dataset(const std::filesystem::path& path, ExportFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, fmt::format("cannot open {}", path.string()));
  const auto fields = required_fields(format);

  ValidationReport report;
  std::map<std::string, std::size_t, std::less<>> first_seen;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t lineno = ++report.line_count;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error&) {
      report.parse_failures.push_back(lineno);
      continue;
    }
    if (!row.is_object()) {
      report.parse_failures.push_back(lineno);
      continue;
    }
    for (auto field : fields) {
      const auto it = row.find(field);
      const bool empty = it == row.end() || !it->is_string() ||
                         it->get_ref<const std::string&>().find_first_not_of(" \t\r\n") == std::string::npos;
      if (empty) report.empty_fields.push_back({lineno, std::string(field)});
    }
    const auto id = row.find("pair_id");
    if (id != row.end() && id->is_string() && !id->get_ref<const std::string&>().empty()) {
      const auto& pid = id->get_ref<const std::string&>();
      const auto [seen, inserted] = first_seen.emplace(pid, lineno);
      if (!inserted) report.duplicate_ids.push_back({pid, seen->second, lineno});
    }
  }
  return report;
}

json TrainingConfigManifest::to_json() const {
  return json{{"epochs", epochs},
              {"learning_rate", learning_rate},
              {"per_device_batch_size", per_device_batch_size},
              {"gradient_accumulation_steps", gradient_accumulation_steps},
              {"precision", precision},
              {"optimizer", optimizer},
              {"scheduler", scheduler},
              {"warmup_ratio", warmup_ratio},
              {"adapter_method", adapter_method},
              {"base_model_id", base_model_id}};
}

namespace {

std::int64_t positive_int(const json& v, std::string_view key) {
  if (!v.is_number_integer()) raise(ErrorKind::Parameter, fmt::format("{} must be an integer", key));
  const auto x = v.get<std::int64_t>();
  if (x <= 0) raise(ErrorKind::Parameter, fmt::format("{} must be positive, got {}", key, x));
  return x;
}

std::string non_empty(const json& v, std::string_view key) {
  if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
    raise(ErrorKind::Parameter, fmt::format("{} must be a non-empty string", key));
  }
  return v.get<std::string>();
}

}  // namespace

TrainingConfigManifest emit_training_config(const json& overrides) {
  if (!overrides.is_object()) raise(ErrorKind::Parameter, "training config overrides must be a JSON object");
  TrainingConfigManifest m;
  for (const auto& [key, v] : overrides.items()) {
    if (key == "epochs") {
      m.epochs = positive_int(v, key);
    } else if (key == "per_device_batch_size") {
      m.per_device_batch_size = positive_int(v, key);
    } else if (key == "gradient_accumulation_steps") {
      m.gradient_accumulation_steps = positive_int(v, key);
    } else if (key == "learning_rate") {
      if (!v.is_number() || !(v.get<double>() > 0.0)) {
        raise(ErrorKind::Parameter, "learning_rate must be a positive number");
      }
      m.learning_rate = v.get<double>();
    } else if (key == "warmup_ratio") {
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() >= 1.0) {
        raise(ErrorKind::Parameter, "warmup_ratio must be a number in [0, 1)");
      }
      m.warmup_ratio = v.get<double>();
    } else if (key == "precision") {
      m.precision = non_empty(v, key);
      if (m.precision != "bfloat16" && m.precision != "float16" && m.precision != "float32") {
        raise(ErrorKind::Parameter, fmt::format("unsupported precision '{}'", m.precision));
      }
    } else if (key == "optimizer") {
      m.optimizer = non_empty(v, key);
    } else if (key == "scheduler") {
      m.scheduler = non_empty(v, key);
    } else if (key == "adapter_method") {
      m.adapter_method = non_empty(v, key);
    } else if (key == "base_model_id") {
      m.base_model_id = non_empty(v, key);
    } else {
      raise(ErrorKind::Parameter, fmt::format("unknown training config key '{}'", key));
    }
  }
  return m;
}

}  // namespace qakit::dataset
