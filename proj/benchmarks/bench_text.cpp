// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <string>

#include <benchmark/benchmark.h>

#include "qakit/corpus.hpp"
#include "qakit/proctor_eval.hpp"
#include "qakit/qa_generation.hpp"

namespace {

void BM_ParseScore(benchmark::State& state) {
  const auto rubric = qakit::eval::Rubric::defaults();
  const std::string raw =
      "Feedback: The response names the right component but omits the cabling detail the reference "
      "answer includes, so it is only partly accurate. [RESULT] 3";
  for (auto _ : state) benchmark::DoNotOptimize(qakit::eval::parse_score(raw, rubric));
}
BENCHMARK(BM_ParseScore);

void BM_ParseQaOutput(benchmark::State& state) {
  std::string raw = "[";
  for (int i = 0; i < 5; ++i)
    raw += (i ? "," : "") + std::string(R"({"question":"What is a patch panel?","answer":"A panel of ports."})");
  raw += "]";
  for (auto _ : state)
    benchmark::DoNotOptimize(qakit::generation::parse_qa_output(raw, qakit::generation::OutputFormat::JsonArray));
}
BENCHMARK(BM_ParseQaOutput);

void BM_Chunk(benchmark::State& state) {
  qakit::corpus::Document doc;
  doc.doc_id = "doc";
  for (int i = 0; i < state.range(0); ++i) doc.body += "word" + std::to_string(i % 97) + " ";
  for (auto _ : state) benchmark::DoNotOptimize(qakit::corpus::chunk(doc, 256, 32));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(doc.body.size()));
}
BENCHMARK(BM_Chunk)->Arg(1000)->Arg(50000);

}  // namespace
