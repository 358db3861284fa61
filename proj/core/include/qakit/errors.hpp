// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qakit {

enum class ErrorKind {
  Parameter,
  Io,
  Conflict,
  NotFound,
  Format,
  Range,
  Auth,
  RateLimit,
  Timeout,
  MalformedPayload,
  Internal,
  Training,
  Generation,
  Usage,
  Dependency,
  Staleness,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by qakit carries a kind so callers (the CLI, the
/// HTTP layer) can map it to an exit code or status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) raise(ErrorKind::Parameter, message);
}

}  // namespace qakit
