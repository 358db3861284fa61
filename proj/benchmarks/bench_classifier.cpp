// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include <benchmark/benchmark.h>

#include "qakit/checksum.hpp"
#include "qakit/qa_classifier.hpp"

namespace {

void BM_FitLogistic(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 64;
  qakit::SplitMix64 rng(3);
  qakit::classifier::FeatureMatrix x{rows, cols, {}};
  std::vector<int> y;
  for (std::size_t i = 0; i < rows; ++i) {
    const int label = static_cast<int>(i % 2);
    y.push_back(label);
    for (std::size_t j = 0; j < cols; ++j) x.data.push_back(rng.normal() + (label ? 0.5 : -0.5));
  }
  qakit::classifier::TrainingHyper hyper;
  hyper.max_iterations = 200;
  for (auto _ : state) benchmark::DoNotOptimize(qakit::classifier::fit_logistic(x, y, hyper));
}
BENCHMARK(BM_FitLogistic)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace
