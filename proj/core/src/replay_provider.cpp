// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/replay_provider.hpp"

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"

namespace qakit::llm {

ReplayProvider::ReplayProvider(const std::filesystem::path& transcript) {
  if (transcript.empty()) raise(ErrorKind::Parameter, "replay provider needs a transcript_path");
  for (const auto& entry : read_jsonl(transcript)) {
    const auto type = entry.value("type", std::string());
    const auto fp = entry.at("fingerprint").get<std::string>();
    if (type == "chat") {
      chats_.emplace(fp, entry.at("response").get<ChatResponse>());
    } else if (type == "embed") {
      embeds_.emplace(fp, entry.at("vectors").get<std::vector<Embedding>>());
    }
  }
}

ChatResponse ReplayProvider::complete(const ChatRequest& request) {
  auto it = chats_.find(request_fingerprint(request));
  if (it == chats_.end())
    raise(ErrorKind::NotFound, "replay: no transcript entry for chat request to model '" +
                                   request.model_id + "'");
  return it->second;
}

std::vector<Embedding> ReplayProvider::embed(std::span<const std::string> texts) {
  auto it = embeds_.find(embed_fingerprint(texts));
  if (it == embeds_.end()) raise(ErrorKind::NotFound, "replay: no transcript entry for embed batch");
  return it->second;
}

}  // namespace qakit::llm
