// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/errors.hpp"

namespace qakit {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Io: return "io";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Format: return "format";
    case ErrorKind::Range: return "range";
    case ErrorKind::Auth: return "auth";
    case ErrorKind::RateLimit: return "rate_limit";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::MalformedPayload: return "malformed_payload";
    case ErrorKind::Internal: return "internal";
    case ErrorKind::Training: return "training";
    case ErrorKind::Generation: return "generation";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Dependency: return "dependency";
    case ErrorKind::Staleness: return "staleness";
  }
  return "unknown";
}

}  // namespace qakit
