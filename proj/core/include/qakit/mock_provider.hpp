// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qakit/llm_gateway.hpp"

namespace qakit::llm {

/// Offline provider. Replies are a pure function of (messages, model,
/// request_seed). Prompts rendered from the shipped templates get
/// structurally valid answers (QA arrays, labels, rubric verdicts); anything
/// else gets a short deterministic completion.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::size_t embedding_dimension = 64);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<Embedding> embed(std::span<const std::string> texts) override;

  std::size_t embedding_dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
};

/// Feature-hashed bag-of-words embedding, L2-normalized. Each lowercase
/// alphanumeric token contributes a pseudo-random Gaussian direction seeded
/// by its hash, so texts sharing words point in similar directions.
Embedding mock_embedding(std::string_view text, std::size_t dimension);

std::string mock_reply(const ChatRequest& request);

/// The mock annotator's rule: definition/explanation openers are
/// conceptual; counts, dates, places and lookups are factual.
bool looks_conceptual(std::string_view question);

}  // namespace qakit::llm
