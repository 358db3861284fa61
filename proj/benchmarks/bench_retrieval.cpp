// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "qakit/checksum.hpp"
#include "qakit/rag_pipeline.hpp"

namespace {

std::vector<double> random_vector(qakit::SplitMix64& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

qakit::rag::VectorIndex make_index(std::size_t n, std::size_t dim) {
  qakit::SplitMix64 rng(7);
  qakit::rag::VectorIndex index(dim);
  for (std::size_t i = 0; i < n; ++i)
    index.add({"c" + std::to_string(i), "d" + std::to_string(i / 4), "text"}, random_vector(rng, dim));
  return index;
}

void BM_QueryTopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto index = make_index(n, 256);
  qakit::SplitMix64 rng(99);
  const auto q = random_vector(rng, 256);
  for (auto _ : state) benchmark::DoNotOptimize(qakit::rag::query_vector(index, q, 3));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_QueryTopK)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

}  // namespace
