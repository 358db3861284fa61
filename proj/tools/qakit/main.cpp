// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

// qakit: run the QA dataset pipeline and its auxiliary tools.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qakit/dataset_builder.hpp"
#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"
#include "qakit/pipeline.hpp"
#include "qakit/proctor_eval.hpp"
#include "qakit/qa_classifier.hpp"
#include "qakit/review_server.hpp"
#include "qakit/review_service.hpp"

namespace {

using qakit::json;
namespace pl = qakit::pipeline;

struct Common {
  std::string config;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Pipeline config (JSON)")->required();
  cmd->add_flag("--force", c.force, "Rerun even when outputs are up to date");
  cmd->add_option("--seed", c.seed, "Override the config seed");
}

void print_manifest(const pl::StageManifest& m) {
  std::string counts;
  for (const auto& [k, v] : m.counts) counts += fmt::format(" {}={}", k, v);
  fmt::print("{:<17} {}{}\n", m.stage, m.reused ? "up to date" : fmt::format("done in {:.0f} ms", m.duration_ms),
             counts);
}

qakit::review::ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qakit: domain QA dataset generation, curation and evaluation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");

  Common common;
  std::string stage_name;

  auto* run = app.add_subcommand("run", "Run every stage in order, or one with --stage");
  add_common(run, common);
  run->add_option("--stage", stage_name, "Single stage to run");

  std::vector<std::pair<std::string, CLI::App*>> stage_cmds;
  for (const auto& s : pl::stage_names()) {
    auto* cmd = app.add_subcommand(s, fmt::format("Run the {} stage", s));
    add_common(cmd, common);
    stage_cmds.emplace_back(s, cmd);
  }

  auto* validate = app.add_subcommand("validate-config", "Check a pipeline config");
  validate->add_option("--config", common.config, "Pipeline config (JSON)")->required();

  std::optional<std::size_t> diag_k;
  auto* diagnose = app.add_subcommand("diagnose-retriever", "Retrieval hit rate of D-Naive questions");
  diagnose->add_option("--config", common.config, "Pipeline config (JSON)")->required();
  diagnose->add_option("--k", diag_k, "Top-k (defaults to rag.k)");

  qakit::review::ServerOptions server_opts;
  std::string static_dir;
  auto* serve = app.add_subcommand("review-serve", "Serve the review API over D-Naive and D-RAG pairs");
  serve->add_option("--config", common.config, "Pipeline config (JSON)")->required();
  serve->add_option("--host", server_opts.host, "Bind address")->capture_default_str();
  serve->add_option("--port", server_opts.port, "Port (0 picks one)")->capture_default_str();
  serve->add_option("--static", static_dir, "Frontend directory served at /");

  std::string dataset_path;
  std::string dataset_format = "qa_jsonl";
  auto* vds = app.add_subcommand("validate-dataset", "Check an exported JSON-Lines dataset");
  vds->add_option("--path", dataset_path, "Dataset file")->required();
  vds->add_option("--format", dataset_format, "qa_jsonl, instruct_template_jsonl or prompt_response_jsonl")
      ->capture_default_str();

  std::string accuracy_path;
  auto* acc = app.add_subcommand("accuracy", "Exact-match accuracy of {expected, predicted} rows");
  acc->add_option("--input", accuracy_path, "JSON-Lines file")->required();

  std::string overrides_path;
  std::string training_out;
  auto* etc = app.add_subcommand("emit-training-config", "Write the fine-tuning hyperparameter manifest");
  etc->add_option("--overrides", overrides_path, "JSON object of fields to override");
  etc->add_option("--output", training_out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (run->parsed()) {
      const auto cfg = pl::load_config(common.config, common.seed);
      pl::validate(cfg);
      pl::RunLock lock(cfg.output_dir);
      if (!stage_name.empty()) {
        print_manifest(pl::run_stage(cfg, stage_name, {common.force}));
      } else {
        for (const auto& s : pl::stage_names()) print_manifest(pl::run_stage(cfg, s, {common.force}));
      }
      return 0;
    }
    for (const auto& [name, cmd] : stage_cmds) {
      if (!cmd->parsed()) continue;
      const auto cfg = pl::load_config(common.config, common.seed);
      pl::validate(cfg);
      pl::RunLock lock(cfg.output_dir);
      print_manifest(pl::run_stage(cfg, name, {common.force}));
      return 0;
    }
    if (validate->parsed()) {
      pl::validate(pl::load_config(common.config));
      fmt::print("config ok\n");
      return 0;
    }
    if (diagnose->parsed()) {
      const auto cfg = pl::load_config(common.config);
      const double rate = pl::diagnose_retriever(cfg, diag_k);
      const json report{{"k", diag_k.value_or(cfg.rag.k)}, {"hit_rate", rate}};
      qakit::write_json_file(cfg.output_dir / "diagnostics" / "retriever.json", report);
      fmt::print("{}\n", report.dump());
      return 0;
    }
    if (serve->parsed()) {
      const auto cfg = pl::load_config(common.config);
      std::vector<qakit::QAPair> pairs;
      for (const auto* stem : {"d_naive", "d_rag"}) {
        const auto p = cfg.output_dir / "qa" / fmt::format("{}.jsonl", stem);
        if (!std::filesystem::exists(p)) {
          throw qakit::Error(qakit::ErrorKind::Dependency, fmt::format("review-serve needs {}", p.string()));
        }
        auto v = qakit::read_pairs(p);
        pairs.insert(pairs.end(), v.begin(), v.end());
      }
      std::map<std::string, std::string> labels;
      if (const auto classified = cfg.output_dir / "qa" / "classified.jsonl"; std::filesystem::exists(classified)) {
        for (const auto& row : qakit::read_jsonl(classified)) {
          labels.emplace(row.at("pair_id").get<std::string>(), row.at("label").get<std::string>());
        }
      }
      qakit::review::ReviewStore store(std::move(pairs), cfg.output_dir / "review" / "decisions.jsonl",
                                       std::move(labels));
      server_opts.export_dir = cfg.output_dir / "review" / "exports";
      server_opts.created_at = cfg.run_timestamp;
      if (!static_dir.empty()) server_opts.static_dir = static_dir;
      qakit::review::ReviewServer server(store, server_opts);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::set_level(spdlog::level::info);
      server.run();
      g_server = nullptr;
      return 0;
    }
    if (vds->parsed()) {
      const auto report = qakit::dataset::validate_dataset(dataset_path, qakit::dataset::parse_export_format(dataset_format));
      fmt::print("{}\n", report.to_json().dump(2));
      return report.valid() ? 0 : 1;
    }
    if (acc->parsed()) {
      std::vector<std::pair<std::string, std::string>> rows;
      for (const auto& row : qakit::read_jsonl(accuracy_path)) {
        rows.emplace_back(row.at("expected").get<std::string>(), row.at("predicted").get<std::string>());
      }
      const double a = qakit::eval::exact_match_accuracy(rows);
      std::size_t hits = 0;
      for (const auto& [e, p] : rows) hits += qakit::eval::exact_match(e, p);
      fmt::print("{}\n", json{{"matches", hits}, {"total", rows.size()}, {"accuracy", a}}.dump());
      return 0;
    }
    if (etc->parsed()) {
      const json overrides = overrides_path.empty() ? json::object() : qakit::read_json_file(overrides_path);
      const auto manifest = qakit::dataset::emit_training_config(overrides).to_json();
      if (training_out.empty()) {
        fmt::print("{}\n", manifest.dump(2));
      } else {
        qakit::write_json_file(training_out, manifest);
      }
      return 0;
    }
  } catch (const qakit::Error& e) {
    fmt::print(stderr, "qakit: {} error: {}\n", qakit::to_string(e.kind()), e.what());
    return pl::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "qakit: {}\n", e.what());
    return 1;
  }
  return 0;
}
