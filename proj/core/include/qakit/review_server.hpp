// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "qakit/review_service.hpp"

namespace qakit::review {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8421;
  /// Directory POST /api/export writes into.
  std::filesystem::path export_dir = "exports";
  /// Optional static frontend mounted at "/".
  std::optional<std::filesystem::path> static_dir;
  std::string created_at;
};

/// JSON API over a ReviewStore:
///   GET  /api/pairs/next?method=&label=&group=
///   GET  /api/pairs/{id}
///   POST /api/decisions
///   GET  /api/stats
///   POST /api/export   {"format": "...", "name": "..."}
class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace qakit::review
