// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qakit/llm_gateway.hpp"

namespace qakit::llm {

/// Serves responses recorded in a gateway transcript, keyed by request
/// fingerprint. Replaying a run's transcript reproduces its outputs without
/// any live backend. Unrecorded requests raise NotFound.
class ReplayProvider final : public Provider {
 public:
  explicit ReplayProvider(const std::filesystem::path& transcript);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<Embedding> embed(std::span<const std::string> texts) override;

  std::size_t chat_entries() const noexcept { return chats_.size(); }
  std::size_t embed_entries() const noexcept { return embeds_.size(); }

 private:
  std::map<std::string, ChatResponse> chats_;
  std::map<std::string, std::vector<Embedding>> embeds_;
};

}  // namespace qakit::llm
