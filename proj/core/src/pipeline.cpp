// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <unistd.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/checksum.hpp"
#include "qakit/corpus.hpp"
#include "qakit/dataset_builder.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/parallel.hpp"
#include "qakit/proctor_eval.hpp"
#include "qakit/prompts.hpp"
#include "qakit/qa_classifier.hpp"
#include "qakit/qa_generation.hpp"
#include "qakit/rag_pipeline.hpp"

namespace qakit::pipeline {

namespace fs = std::filesystem;

namespace {

// Rejects keys outside `allowed` so typos in a config never pass silently.
void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) raise(ErrorKind::Parameter, fmt::format("config section '{}' must be an object", section));
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      raise(ErrorKind::Parameter, fmt::format("unknown config key '{}{}{}'", section, section.empty() ? "" : ".", key));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorKind::Parameter, fmt::format("config key '{}.{}' has the wrong type", section, key));
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ModelRef read_model(const json& j, std::string_view section, ModelRef defaults) {
  ModelRef m = std::move(defaults);
  read(j, "provider", m.provider, section);
  read(j, "model", m.model, section);
  read(j, "temperature", m.temperature, section);
  return m;
}

}  // namespace

std::string PipelineConfig::hash() const {
  json j = raw;
  j["seed"] = seed;
  return sha256_hex(j.dump());
}

PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "", {"output_dir", "run_timestamp", "seed", "concurrency", "corpus", "providers",
                     "embedding_provider", "transcript", "generation", "rag", "classifier", "split", "export",
                     "evaluation", "training"});
  PipelineConfig c;
  c.raw = j;
  if (!j.contains("output_dir")) raise(ErrorKind::Parameter, "config needs output_dir");
  c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
  read(j, "run_timestamp", c.run_timestamp, "");
  read(j, "seed", c.seed, "");
  read(j, "concurrency", c.concurrency, "");
  read(j, "embedding_provider", c.embedding_provider, "");
  if (j.contains("transcript")) c.transcript = resolve(base_dir, j.at("transcript").get<std::string>());

  if (!j.contains("corpus")) raise(ErrorKind::Parameter, "config needs a corpus section");
  const auto& cj = j.at("corpus");
  check_keys(cj, "corpus", {"source", "format", "max_chunk_tokens", "overlap_tokens"});
  if (!cj.contains("source")) raise(ErrorKind::Parameter, "config needs corpus.source");
  c.corpus.source = resolve(base_dir, cj.at("source").get<std::string>());
  read(cj, "format", c.corpus.format, "corpus");
  read(cj, "max_chunk_tokens", c.corpus.max_chunk_tokens, "corpus");
  read(cj, "overlap_tokens", c.corpus.overlap_tokens, "corpus");

  if (j.contains("providers")) {
    for (const auto& [id, pj] : j.at("providers").items()) {
      llm::ProviderConfig pc = pj.get<llm::ProviderConfig>();
      if (!pc.transcript_path.empty()) pc.transcript_path = resolve(base_dir, pc.transcript_path.string());
      c.providers.emplace(id, std::move(pc));
    }
  } else {
    c.providers.emplace("mock", llm::ProviderConfig{});
  }

  if (j.contains("generation")) {
    const auto& g = j.at("generation");
    check_keys(g, "generation", {"provider", "model", "temperature", "pairs_per_doc", "output_format", "dedupe",
                                 "dedupe_threshold"});
    c.generation.model = read_model(g, "generation", c.generation.model);
    read(g, "pairs_per_doc", c.generation.pairs_per_doc, "generation");
    read(g, "output_format", c.generation.output_format, "generation");
    read(g, "dedupe", c.generation.dedupe, "generation");
    read(g, "dedupe_threshold", c.generation.dedupe_threshold, "generation");
  }
  if (j.contains("rag")) {
    const auto& r = j.at("rag");
    check_keys(r, "rag", {"provider", "model", "temperature", "k"});
    c.rag.model = read_model(r, "rag", c.rag.model);
    read(r, "k", c.rag.k, "rag");
  }
  if (j.contains("classifier")) {
    const auto& k = j.at("classifier");
    check_keys(k, "classifier", {"annotator", "annotation_sample", "learning_rate", "l2_strength", "max_iterations",
                                 "tolerance", "held_out_fraction", "include_answer"});
    if (k.contains("annotator")) {
      const auto& a = k.at("annotator");
      check_keys(a, "classifier.annotator", {"provider", "model", "temperature"});
      c.classifier.annotator = read_model(a, "classifier.annotator", c.classifier.annotator);
    }
    read(k, "annotation_sample", c.classifier.annotation_sample, "classifier");
    read(k, "learning_rate", c.classifier.learning_rate, "classifier");
    read(k, "l2_strength", c.classifier.l2_strength, "classifier");
    read(k, "max_iterations", c.classifier.max_iterations, "classifier");
    read(k, "tolerance", c.classifier.tolerance, "classifier");
    read(k, "held_out_fraction", c.classifier.held_out_fraction, "classifier");
    read(k, "include_answer", c.classifier.include_answer, "classifier");
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, "split", {"test_size", "seed"});
    read(s, "test_size", c.split.test_size, "split");
    if (s.contains("seed")) c.split.seed = s.at("seed").get<std::uint64_t>();
  }
  if (j.contains("export")) {
    const auto& e = j.at("export");
    check_keys(e, "export", {"formats"});
    read(e, "formats", c.export_formats, "export");
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, "evaluation", {"proctors", "candidates", "candidate_model", "rubric"});
    read(e, "proctors", c.evaluation.proctors, "evaluation");
    if (e.contains("candidates")) c.evaluation.candidates = resolve(base_dir, e.at("candidates").get<std::string>());
    if (e.contains("candidate_model")) {
      const auto& m = e.at("candidate_model");
      check_keys(m, "evaluation.candidate_model", {"provider", "model", "temperature"});
      c.evaluation.candidate_model = read_model(m, "evaluation.candidate_model", c.evaluation.candidate_model);
    }
    if (e.contains("rubric")) c.evaluation.rubric = resolve(base_dir, e.at("rubric").get<std::string>());
  }
  if (j.contains("training")) c.training_overrides = j.at("training");
  return c;
}

PipelineConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  if (!fs::exists(path)) raise(ErrorKind::Dependency, fmt::format("config file {} not found", path.string()));
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    raise(ErrorKind::Parameter, fmt::format("{}: {}", path.string(), e.what()));
  }
  auto c = parse_config(j, fs::absolute(path).parent_path());
  c.config_path = path;
  if (seed_override) c.seed = *seed_override;
  return c;
}

void validate(const PipelineConfig& c) {
  corpus::parse_input_format(c.corpus.format);
  require(c.corpus.max_chunk_tokens > c.corpus.overlap_tokens,
          fmt::format("corpus.max_chunk_tokens ({}) must exceed corpus.overlap_tokens ({})", c.corpus.max_chunk_tokens,
                      c.corpus.overlap_tokens));
  if (!fs::exists(c.corpus.source)) {
    raise(ErrorKind::Dependency, fmt::format("corpus source {} does not exist", c.corpus.source.string()));
  }
  require(c.concurrency >= 1, "concurrency must be at least 1");

  auto need_provider = [&](const std::string& id, std::string_view who) {
    if (!c.providers.contains(id)) {
      raise(ErrorKind::Parameter, fmt::format("{} refers to unknown provider '{}'", who, id));
    }
  };
  for (const auto& [id, pc] : c.providers) {
    if (pc.kind == "replay" && !fs::exists(pc.transcript_path)) {
      raise(ErrorKind::Dependency,
            fmt::format("provider '{}' replays missing transcript {}", id, pc.transcript_path.string()));
    }
    if (pc.kind != "mock" && pc.kind != "replay" && pc.kind != "openai_compatible") {
      raise(ErrorKind::Parameter, fmt::format("provider '{}' has unknown kind '{}'", id, pc.kind));
    }
  }
  need_provider(c.embedding_provider, "embedding_provider");
  need_provider(c.generation.model.provider, "generation");
  need_provider(c.rag.model.provider, "rag");
  need_provider(c.classifier.annotator.provider, "classifier.annotator");
  need_provider(c.evaluation.candidate_model.provider, "evaluation.candidate_model");

  generation::GenerationSpec::defaults(c.generation.pairs_per_doc,
                                       generation::parse_output_format(c.generation.output_format))
      .validate();
  if (c.generation.dedupe != "none") generation::parse_dedupe_mode(c.generation.dedupe);
  require(c.generation.dedupe_threshold >= 0.0 && c.generation.dedupe_threshold <= 1.0,
          "generation.dedupe_threshold must be in [0, 1]");
  require(c.rag.k >= 1, "rag.k must be at least 1");
  require(c.classifier.learning_rate > 0.0, "classifier.learning_rate must be positive");
  require(c.classifier.l2_strength >= 0.0, "classifier.l2_strength must be non-negative");
  require(c.classifier.max_iterations >= 1, "classifier.max_iterations must be at least 1");
  require(c.classifier.held_out_fraction >= 0.0 && c.classifier.held_out_fraction < 1.0,
          "classifier.held_out_fraction must be in [0, 1)");
  require(c.split.test_size > 0.0, "split.test_size must be positive");
  require(c.split.test_size < 1.0 || std::floor(c.split.test_size) == c.split.test_size,
          "split.test_size must be a fraction below 1 or a whole count");
  require(!c.export_formats.empty(), "export.formats is empty");
  for (const auto& f : c.export_formats) dataset::parse_export_format(f);
  require(!c.evaluation.proctors.empty(), "evaluation.proctors is empty");
  std::set<std::string> seen;
  for (const auto& p : c.evaluation.proctors) {
    const auto proctor = eval::parse_proctor(p);
    need_provider(proctor.provider_id, fmt::format("proctor '{}'", p));
    require(seen.insert(proctor.model_id).second, fmt::format("proctor model '{}' listed twice", proctor.model_id));
  }
  if (c.evaluation.candidates && !fs::exists(*c.evaluation.candidates)) {
    raise(ErrorKind::Dependency, fmt::format("candidates file {} not found", c.evaluation.candidates->string()));
  }
  if (c.evaluation.rubric) {
    if (!fs::exists(*c.evaluation.rubric)) {
      raise(ErrorKind::Dependency, fmt::format("rubric file {} not found", c.evaluation.rubric->string()));
    }
    eval::Rubric::from_json(read_json_file(*c.evaluation.rubric));
  }
  dataset::emit_training_config(c.training_overrides);
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"ingest",   "generate", "rag-regenerate", "annotate", "train-classifier",
                                              "classify", "split",    "export",         "evaluate", "summarize"};
  return names;
}

json StageManifest::to_json() const {
  auto list = [](const std::vector<Artifact>& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back({{"path", x.path}, {"sha256", x.sha256}});
    return a;
  };
  return json{{"stage", stage},
              {"inputs", list(inputs)},
              {"outputs", list(outputs)},
              {"counts", counts},
              {"duration_ms", duration_ms},
              {"config_hash", config_hash}};
}

StageManifest StageManifest::from_json(const json& j) {
  auto list = [](const json& a) {
    std::vector<Artifact> v;
    for (const auto& x : a) v.push_back({x.at("path").get<std::string>(), x.at("sha256").get<std::string>()});
    return v;
  };
  StageManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.inputs = list(j.at("inputs"));
  m.outputs = list(j.at("outputs"));
  m.counts = j.value("counts", std::map<std::string, std::size_t>{});
  m.duration_ms = j.value("duration_ms", 0.0);
  m.config_hash = j.value("config_hash", std::string());
  return m;
}

fs::path manifest_path(const PipelineConfig& config, std::string_view stage) {
  return config.output_dir / "manifests" / fmt::format("{}.json", stage);
}

std::unique_ptr<llm::Gateway> make_gateway(const PipelineConfig& config) {
  auto gw = std::make_unique<llm::Gateway>();
  // The embedding provider goes first so it becomes the default.
  gw->add_provider(config.embedding_provider, config.providers.at(config.embedding_provider));
  for (const auto& [id, pc] : config.providers) {
    if (id != config.embedding_provider) gw->add_provider(id, pc);
  }
  gw->set_embedding_provider(config.embedding_provider);
  if (config.transcript) gw->set_transcript(std::make_shared<llm::TranscriptLog>(*config.transcript));
  return gw;
}

RunLock::RunLock(const fs::path& output_dir) : path_(output_dir / ".qakit.lock") {
  fs::create_directories(output_dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    raise(ErrorKind::Conflict,
          fmt::format("{} exists: another run is using this output directory (delete it if that run is gone)",
                      path_.string()));
  }
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Dependency: return 3;
    case ErrorKind::Staleness: return 4;
    default: return 1;
  }
}

namespace {

struct DatasetDef {
  std::string_view name;
  std::string_view stem;
  std::string_view producer;
};

constexpr DatasetDef kDatasets[] = {
    {"D-RAG", "d_rag", "rag-regenerate"},
    {"D-Naive", "d_naive", "generate"},
    {"Factual", "factual", "classify"},
    {"Conceptual", "conceptual", "classify"},
};

std::string qa_path(std::string_view stem) { return fmt::format("qa/{}.jsonl", stem); }
std::string split_path(std::string_view stem, std::string_view role) {
  return fmt::format("splits/{}.{}.jsonl", stem, role);
}

constexpr std::string_view kDocuments = "corpus/documents.jsonl";
constexpr std::string_view kChunks = "corpus/chunks.jsonl";
constexpr std::string_view kIndex = "index/index.json";
constexpr std::string_view kAnnotations = "classifier/annotations.jsonl";
constexpr std::string_view kModel = "classifier/model.json";
constexpr std::string_view kClassified = "qa/classified.jsonl";
constexpr std::string_view kRecords = "eval/records.jsonl";

struct Input {
  std::string path;
  std::string producer;
};

std::vector<Input> stage_inputs(std::string_view stage) {
  std::vector<Input> in;
  auto add = [&](std::string_view p, std::string_view producer) { in.push_back({std::string(p), std::string(producer)}); };
  if (stage == "generate") {
    add(kDocuments, "ingest");
  } else if (stage == "rag-regenerate") {
    add(kDocuments, "ingest");
    add(kChunks, "ingest");
    add(qa_path("d_naive"), "generate");
  } else if (stage == "annotate") {
    add(qa_path("d_naive"), "generate");
  } else if (stage == "train-classifier") {
    add(kAnnotations, "annotate");
    add(qa_path("d_naive"), "generate");
  } else if (stage == "classify") {
    add(kModel, "train-classifier");
    add(qa_path("d_naive"), "generate");
  } else if (stage == "split") {
    for (const auto& d : kDatasets) add(qa_path(d.stem), d.producer);
  } else if (stage == "export") {
    for (const auto& d : kDatasets) {
      add(split_path(d.stem, "train"), "split");
      add(split_path(d.stem, "test"), "split");
    }
  } else if (stage == "evaluate") {
    for (const auto& d : kDatasets) add(split_path(d.stem, "test"), "split");
  } else if (stage == "summarize") {
    add(kRecords, "evaluate");
  }
  return in;
}

std::optional<StageManifest> read_manifest(const PipelineConfig& config, std::string_view stage) {
  const auto path = manifest_path(config, stage);
  if (!fs::exists(path)) return std::nullopt;
  return StageManifest::from_json(read_json_file(path));
}

// Checks every upstream artifact against its producer's manifest.
std::vector<Artifact> verify_inputs(const PipelineConfig& config, std::string_view stage) {
  std::vector<Artifact> verified;
  for (const auto& in : stage_inputs(stage)) {
    const auto path = config.output_dir / in.path;
    if (!fs::exists(path)) {
      raise(ErrorKind::Dependency,
            fmt::format("stage '{}' needs {} (run stage '{}' first)", stage, path.string(), in.producer));
    }
    const auto producer = read_manifest(config, in.producer);
    if (!producer) {
      raise(ErrorKind::Dependency, fmt::format("stage '{}' needs {} but stage '{}' has no manifest", stage,
                                               manifest_path(config, in.producer).string(), in.producer));
    }
    const auto sha = sha256_file(path);
    const auto it = std::find_if(producer->outputs.begin(), producer->outputs.end(),
                                 [&](const Artifact& a) { return a.path == in.path; });
    if (it == producer->outputs.end() || it->sha256 != sha) {
      raise(ErrorKind::Staleness, fmt::format("{} does not match the manifest of stage '{}'; rerun that stage",
                                              path.string(), in.producer));
    }
    verified.push_back({in.path, sha});
  }
  return verified;
}

// Ingest reads external files, so its input is a digest over the source tree.
Artifact source_digest(const PipelineConfig& config) {
  const auto& src = config.corpus.source;
  std::vector<fs::path> files;
  if (fs::is_directory(src)) {
    for (const auto& e : fs::recursive_directory_iterator(src)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
  } else {
    files.push_back(src);
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) {
    const auto name = fs::is_directory(src) ? fs::relative(f, src) : f.filename();
    listing += name.generic_string() + '\t' + sha256_file(f) + '\n';
  }
  return {"corpus-source", sha256_hex(listing)};
}

class StageContext {
 public:
  StageContext(const PipelineConfig& config, std::string_view stage) : config_(config) {
    manifest_.stage = std::string(stage);
    manifest_.config_hash = config.hash();
  }

  fs::path in(std::string_view rel) const { return config_.output_dir / rel; }

  fs::path out(std::string_view rel) {
    outputs_.emplace_back(rel);
    const auto p = config_.output_dir / rel;
    fs::create_directories(p.parent_path());
    return p;
  }

  void count(const std::string& key, std::size_t n) { manifest_.counts[key] = n; }

  StageManifest& manifest() { return manifest_; }

  void seal() {
    for (const auto& rel : outputs_) manifest_.outputs.push_back({rel, sha256_file(config_.output_dir / rel)});
  }

  const PipelineConfig& config() const { return config_; }
  llm::Gateway& gateway() {
    if (!gateway_) gateway_ = make_gateway(config_);
    return *gateway_;
  }

 private:
  const PipelineConfig& config_;
  StageManifest manifest_;
  std::vector<std::string> outputs_;
  std::unique_ptr<llm::Gateway> gateway_;
};

std::vector<QAPair> read_qa(const fs::path& path) { return read_pairs(path); }

void run_ingest(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto fmt_in = corpus::parse_input_format(c.corpus.format);
  auto result = corpus::ingest(c.corpus.source, fmt_in);
  for (const auto& w : result.warnings) spdlog::warn("{}", w);
  if (result.documents.empty()) raise(ErrorKind::Parameter, "corpus source holds no non-empty documents");
  const auto chunks = corpus::chunk_all(result.documents, c.corpus.max_chunk_tokens, c.corpus.overlap_tokens);
  corpus::write_documents(ctx.out(kDocuments), result.documents);
  corpus::write_chunks(ctx.out(kChunks), chunks);
  ctx.count("documents", result.documents.size());
  ctx.count("chunks", chunks.size());
  ctx.count("warnings", result.warnings.size());
}

void run_generate(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto docs = corpus::read_documents(ctx.in(kDocuments));
  const auto spec = generation::GenerationSpec::defaults(c.generation.pairs_per_doc,
                                                         generation::parse_output_format(c.generation.output_format));
  generation::GenerationOptions opts;
  opts.provider_id = c.generation.model.provider;
  opts.model_id = c.generation.model.model;
  opts.temperature = c.generation.model.temperature;
  opts.seed = static_cast<std::int64_t>(c.seed);
  opts.created_at = c.run_timestamp;
  opts.concurrency = c.concurrency;
  auto result = generation::generate_dnaive(docs, spec, ctx.gateway(), opts);

  std::vector<QAPair> pairs = std::move(result.pairs);
  const std::size_t generated = pairs.size();
  if (c.generation.dedupe != "none") {
    pairs = generation::dedupe(pairs, generation::parse_dedupe_mode(c.generation.dedupe), c.generation.dedupe_threshold,
                               &ctx.gateway());
  }
  write_pairs(ctx.out(qa_path("d_naive")), pairs);
  generation::write_rejections(ctx.out("qa/d_naive.rejections.jsonl"), result.rejections, result.failures);
  ctx.count("documents", docs.size());
  ctx.count("generated", generated);
  ctx.count("pairs", pairs.size());
  ctx.count("duplicates_dropped", generated - pairs.size());
  ctx.count("rejections", result.rejections.size());
  ctx.count("failed_documents", result.failures.size());
}

void run_rag(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto docs = corpus::read_documents(ctx.in(kDocuments));
  const auto chunks = corpus::read_chunks(ctx.in(kChunks));
  const auto pairs = read_qa(ctx.in(qa_path("d_naive")));
  const auto index = rag::build_index(chunks, ctx.gateway(), corpus::corpus_checksum(docs));
  index.save(ctx.out(kIndex));

  rag::RegenerationOptions opts;
  opts.provider_id = c.rag.model.provider;
  opts.model_id = c.rag.model.model;
  opts.temperature = c.rag.model.temperature;
  opts.seed = static_cast<std::int64_t>(c.seed);
  opts.created_at = c.run_timestamp;
  opts.concurrency = c.concurrency;
  const auto result = rag::regenerate_drag(pairs, index, c.rag.k, prompts::asset(prompts::kRagAnswer).text,
                                           ctx.gateway(), opts);
  write_pairs(ctx.out(qa_path("d_rag")), result.pairs);
  std::vector<json> skipped;
  for (const auto& s : result.skipped) skipped.push_back({{"pair_id", s.pair_id}, {"reason", s.reason}});
  write_jsonl(ctx.out("qa/d_rag.skipped.jsonl"), skipped);
  ctx.count("indexed_chunks", index.size());
  ctx.count("pairs", result.pairs.size());
  ctx.count("skipped", result.skipped.size());
}

void run_annotate(StageContext& ctx) {
  const auto& c = ctx.config();
  auto pairs = read_qa(ctx.in(qa_path("d_naive")));
  if (c.classifier.annotation_sample > 0 && c.classifier.annotation_sample < pairs.size()) {
    auto perm = seeded_permutation(pairs.size(), c.seed);
    perm.resize(c.classifier.annotation_sample);
    std::sort(perm.begin(), perm.end());
    std::vector<QAPair> sample;
    for (auto i : perm) sample.push_back(pairs[i]);
    pairs = std::move(sample);
  }
  classifier::AnnotationOptions opts;
  opts.provider_id = c.classifier.annotator.provider;
  opts.model_id = c.classifier.annotator.model;
  opts.seed = static_cast<std::int64_t>(c.seed);
  opts.concurrency = c.concurrency;
  const auto result = classifier::annotate_llm(pairs, prompts::asset(prompts::kAnnotation).text, ctx.gateway(), opts);
  classifier::write_annotations(ctx.out(kAnnotations), result);
  std::size_t conceptual = 0;
  for (const auto& a : result.annotated) conceptual += a.label == classifier::Label::Conceptual;
  ctx.count("annotated", result.annotated.size());
  ctx.count("conceptual", conceptual);
  ctx.count("factual", result.annotated.size() - conceptual);
  ctx.count("unlabeled", result.unlabeled.size());
}

void run_train(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto annotations = classifier::read_annotations(ctx.in(kAnnotations));
  const auto pairs = read_qa(ctx.in(qa_path("d_naive")));
  classifier::TrainingHyper hyper;
  hyper.learning_rate = c.classifier.learning_rate;
  hyper.l2_strength = c.classifier.l2_strength;
  hyper.max_iterations = c.classifier.max_iterations;
  hyper.tolerance = c.classifier.tolerance;
  hyper.held_out_fraction = c.classifier.held_out_fraction;
  hyper.seed = c.seed;
  classifier::FeatureSpec spec;
  spec.embedding_dimension = c.providers.at(c.embedding_provider).embedding_dimension;
  spec.include_answer = c.classifier.include_answer;
  const auto model = classifier::train(annotations.annotated, pairs, hyper, spec, ctx.gateway());
  model.save(ctx.out(kModel));
  ctx.count("train_size", model.training_meta.train_size);
  ctx.count("held_out_size", model.training_meta.held_out_size);
  ctx.count("iterations", model.training_meta.iterations);
}

void run_classify(StageContext& ctx) {
  const auto model = classifier::ClassifierModel::load(ctx.in(kModel));
  const auto pairs = read_qa(ctx.in(qa_path("d_naive")));
  const auto split = classifier::split_by_label(pairs, model, ctx.gateway());
  std::vector<QAPair> conceptual;
  std::vector<QAPair> factual;
  std::vector<json> rows;
  for (const auto& cp : split.conceptual) conceptual.push_back(cp.pair);
  for (const auto& cp : split.factual) factual.push_back(cp.pair);
  auto add_rows = [&](const std::vector<classifier::ClassifiedPair>& v, classifier::Label label) {
    for (const auto& cp : v) {
      rows.push_back({{"pair_id", cp.pair.pair_id},
                      {"label", classifier::to_string(label)},
                      {"probability_conceptual", cp.probability_conceptual}});
    }
  };
  add_rows(split.conceptual, classifier::Label::Conceptual);
  add_rows(split.factual, classifier::Label::Factual);
  std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
    return pair_id_less(a.at("pair_id").get<std::string>(), b.at("pair_id").get<std::string>());
  });
  write_pairs(ctx.out(qa_path("conceptual")), conceptual);
  write_pairs(ctx.out(qa_path("factual")), factual);
  write_jsonl(ctx.out(kClassified), rows);
  ctx.count("conceptual", conceptual.size());
  ctx.count("factual", factual.size());
}

std::size_t test_count(double test_size, std::size_t n) {
  if (test_size < 1.0) {
    const auto t = static_cast<std::size_t>(std::llround(test_size * static_cast<double>(n)));
    return std::clamp<std::size_t>(t, 1, n - 1);
  }
  return static_cast<std::size_t>(test_size);
}

void run_split(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto seed = c.split.seed.value_or(c.seed);
  for (const auto& d : kDatasets) {
    const auto pairs = read_qa(ctx.in(qa_path(d.stem)));
    const std::vector<dataset::Record> records(pairs.begin(), pairs.end());
    const auto train_path = ctx.out(split_path(d.stem, "train"));
    const auto test_path = ctx.out(split_path(d.stem, "test"));
    dataset::DatasetManifest manifest;
    if (records.size() < 2) {
      spdlog::warn("dataset {} has {} pairs; nothing held out", d.name, records.size());
      dataset::export_dataset(records, dataset::ExportFormat::QaJsonl, train_path);
      dataset::export_dataset({}, dataset::ExportFormat::QaJsonl, test_path);
      manifest.name = std::string(d.name);
      manifest.record_count = manifest.train_count = records.size();
      manifest.split_seed = seed;
      manifest.created_at = c.run_timestamp;
    } else {
      const auto t = test_count(c.split.test_size, records.size());
      if (t >= records.size()) {
        raise(ErrorKind::Parameter, fmt::format("split.test_size {} leaves no training data in {} ({} pairs)",
                                                c.split.test_size, d.name, records.size()));
      }
      auto split = dataset::split_train_test(records, t, seed, std::string(d.name), "", c.run_timestamp);
      dataset::export_dataset(split.train, dataset::ExportFormat::QaJsonl, train_path);
      dataset::export_dataset(split.test, dataset::ExportFormat::QaJsonl, test_path);
      manifest = std::move(split.manifest);
    }
    manifest.export_format = "qa_jsonl";
    write_json_file(ctx.out(fmt::format("splits/{}.manifest.json", d.stem)), manifest.to_json());
    ctx.count(fmt::format("{}_train", d.stem), manifest.train_count);
    ctx.count(fmt::format("{}_test", d.stem), manifest.test_count);
  }
}

std::vector<dataset::Record> read_records(const fs::path& path) {
  return dataset::import_dataset(path, dataset::ExportFormat::QaJsonl);
}

void run_export(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto seed = c.split.seed.value_or(c.seed);
  for (const auto& d : kDatasets) {
    for (const auto role : {dataset::SplitRole::Train, dataset::SplitRole::Test}) {
      const std::string_view role_name = role == dataset::SplitRole::Train ? "train" : "test";
      const auto records = read_records(ctx.in(split_path(d.stem, role_name)));
      for (const auto& f : c.export_formats) {
        const auto format = dataset::parse_export_format(f);
        dataset::ExportOptions opts;
        opts.name = std::string(d.name);
        opts.method_tag = "";
        opts.created_at = c.run_timestamp;
        opts.split_seed = seed;
        opts.role = role;
        const auto stem = fmt::format("exports/{}.{}.{}", d.stem, role_name, f);
        const auto manifest = dataset::export_dataset(records, format, ctx.out(stem + ".jsonl"), opts);
        write_json_file(ctx.out(stem + ".manifest.json"), manifest.to_json());
        ctx.count(fmt::format("{}_{}", d.stem, role_name), records.size());
      }
    }
  }
  write_json_file(ctx.out("exports/training_config.json"), dataset::emit_training_config(c.training_overrides).to_json());
}

void run_evaluate(StageContext& ctx) {
  const auto& c = ctx.config();
  std::vector<eval::Proctor> proctors;
  for (const auto& p : c.evaluation.proctors) proctors.push_back(eval::parse_proctor(p));
  eval::EvaluationOptions opts;
  opts.seed = static_cast<std::int64_t>(c.seed);
  opts.concurrency = c.concurrency;
  if (c.evaluation.rubric) opts.rubric = eval::Rubric::from_json(read_json_file(*c.evaluation.rubric));

  std::optional<std::map<std::string, std::string>> external;
  if (c.evaluation.candidates) external = eval::read_candidates(*c.evaluation.candidates);

  std::vector<eval::EvaluationRecord> all;
  std::vector<json> candidate_rows;
  for (const auto& d : kDatasets) {
    const auto pairs = read_qa(ctx.in(split_path(d.stem, "test")));
    std::map<std::string, std::string> candidates;
    if (external) {
      candidates = *external;
    } else {
      const auto& m = c.evaluation.candidate_model;
      auto answers = parallel_map<std::string>(pairs.size(), c.concurrency, [&](std::size_t i) {
        auto req = llm::user_request(m.provider, m.model, pairs[i].question, static_cast<std::int64_t>(c.seed));
        req.temperature = m.temperature;
        return ctx.gateway().complete(req).content;
      });
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        candidate_rows.push_back({{"dataset", d.name}, {"pair_id", pairs[i].pair_id}, {"response", answers[i]}});
        candidates.emplace(pairs[i].pair_id, std::move(answers[i]));
      }
    }
    opts.dataset_name = std::string(d.name);
    auto records = eval::evaluate_dataset(pairs, candidates, proctors, ctx.gateway(), opts);
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.failed();
    ctx.count(fmt::format("{}_records", d.stem), records.size());
    ctx.count(fmt::format("{}_failed", d.stem), failed);
    std::move(records.begin(), records.end(), std::back_inserter(all));
  }
  eval::write_records(ctx.out(kRecords), all);
  if (!external) write_jsonl(ctx.out("eval/candidates.jsonl"), candidate_rows);
  ctx.count("records", all.size());
}

void run_summarize(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto records = eval::read_records(ctx.in(kRecords));
  if (records.empty()) raise(ErrorKind::Parameter, "no evaluation records to summarize");
  const auto summaries = eval::summarize_scores(records);
  json sj = json::array();
  for (const auto& s : summaries) sj.push_back(s.to_json());
  write_json_file(ctx.out("eval/summary.json"), sj);

  std::vector<std::string> rows;
  for (const auto& d : kDatasets) rows.emplace_back(d.name);
  std::vector<std::string> cols;
  for (const auto& p : c.evaluation.proctors) cols.push_back(eval::parse_proctor(p).model_id);
  write_text_file(ctx.out("eval/table.txt"), eval::render_table(summaries, rows, cols));

  const auto hist = eval::score_histogram(records);
  write_text_file(ctx.out("eval/histogram.csv"), eval::histogram_csv(hist));
  write_json_file(ctx.out("eval/histogram.json"), eval::histogram_json(hist));
  std::size_t failed = 0;
  for (const auto& s : summaries) failed += s.n_failed;
  ctx.count("groups", summaries.size());
  ctx.count("scored", records.size() - failed);
  ctx.count("failed", failed);
}

bool outputs_intact(const PipelineConfig& config, const StageManifest& m) {
  for (const auto& a : m.outputs) {
    const auto p = config.output_dir / a.path;
    if (!fs::exists(p) || sha256_file(p) != a.sha256) return false;
  }
  return true;
}

}  // namespace

StageManifest run_stage(const PipelineConfig& config, std::string_view stage, const RunOptions& options) {
  const auto& names = stage_names();
  if (std::find(names.begin(), names.end(), stage) == names.end()) {
    raise(ErrorKind::Usage, fmt::format("unknown stage '{}' (stages: {})", stage, fmt::join(names, ", ")));
  }
  auto inputs = stage == "ingest" ? std::vector<Artifact>{source_digest(config)} : verify_inputs(config, stage);
  if (stage == "evaluate" && config.evaluation.candidates) {
    inputs.push_back({"candidates",
                      sha256_file(*config.evaluation.candidates)});
  }

  if (!options.force) {
    if (auto prior = read_manifest(config, stage);
        prior && prior->config_hash == config.hash() && prior->inputs == inputs && outputs_intact(config, *prior)) {
      spdlog::info("stage {} is up to date", stage);
      prior->reused = true;
      return *prior;
    }
  }

  const auto started = std::chrono::steady_clock::now();
  StageContext ctx(config, stage);
  ctx.manifest().inputs = inputs;
  spdlog::info("running stage {}", stage);
  if (stage == "ingest") run_ingest(ctx);
  else if (stage == "generate") run_generate(ctx);
  else if (stage == "rag-regenerate") run_rag(ctx);
  else if (stage == "annotate") run_annotate(ctx);
  else if (stage == "train-classifier") run_train(ctx);
  else if (stage == "classify") run_classify(ctx);
  else if (stage == "split") run_split(ctx);
  else if (stage == "export") run_export(ctx);
  else if (stage == "evaluate") run_evaluate(ctx);
  else if (stage == "summarize") run_summarize(ctx);
  ctx.seal();
  ctx.manifest().duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  write_json_file(manifest_path(config, stage), ctx.manifest().to_json());
  return ctx.manifest();
}

std::vector<StageManifest> run_all(const PipelineConfig& config, const RunOptions& options) {
  std::vector<StageManifest> out;
  for (const auto& s : stage_names()) out.push_back(run_stage(config, s, options));
  return out;
}

double diagnose_retriever(const PipelineConfig& config, std::optional<std::size_t> k) {
  const auto index_path = config.output_dir / kIndex;
  const auto pairs_path = config.output_dir / qa_path("d_naive");
  for (const auto& p : {index_path, pairs_path}) {
    if (!fs::exists(p)) raise(ErrorKind::Dependency, fmt::format("retriever diagnostics need {}", p.string()));
  }
  const auto docs = corpus::read_documents(config.output_dir / kDocuments);
  const auto index = rag::VectorIndex::load(index_path, corpus::corpus_checksum(docs));
  const auto pairs = read_pairs(pairs_path);
  auto gateway = make_gateway(config);
  return rag::retrieval_hit_rate(pairs, index, k.value_or(config.rag.k), *gateway);
}

}  // namespace qakit::pipeline
