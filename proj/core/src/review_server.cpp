// Copyright (c) 2026, qakit contributors
// SPDX-License-Identifier: Apache-2.0

#include "qakit/review_server.hpp"

#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "qakit/errors.hpp"
#include "qakit/jsonl.hpp"

namespace qakit::review {

namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter:
    case ErrorKind::Format: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    default: return 500;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_json(res, {{"error", e.what()}, {"kind", to_string(e.kind())}}, status_for(e.kind()));
    } catch (const json::exception& e) {
      send_json(res, {{"error", e.what()}, {"kind", "parameter"}}, 400);
    } catch (const std::exception& e) {
      spdlog::error("review server: {}", e.what());
      send_json(res, {{"error", e.what()}, {"kind", "internal"}}, 500);
    }
  };
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::Parameter, fmt::format("request body is not JSON: {}", e.what()));
  }
}

Filter filter_from(const httplib::Request& req) {
  Filter f;
  auto param = [&](const char* key) -> std::optional<std::string> {
    if (!req.has_param(key)) return std::nullopt;
    auto v = req.get_param_value(key);
    if (v.empty()) return std::nullopt;
    return v;
  };
  if (auto m = param("method")) f.method = parse_method(*m);
  f.label = param("label");
  f.group = param("group");
  return f;
}

}  // namespace

struct ReviewServer::Impl {
  Impl(ReviewStore& s, ServerOptions o) : store(s), options(std::move(o)) {}

  int bind() {
    const int port = options.port == 0 ? server.bind_to_any_port(options.host)
                                       : (server.bind_to_port(options.host, options.port) ? options.port : -1);
    if (port <= 0) raise(ErrorKind::Io, fmt::format("cannot bind {}:{}", options.host, options.port));
    return port;
  }

  ReviewStore& store;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
};

ReviewServer::ReviewServer(ReviewStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  auto& svr = impl_->server;
  auto* impl = impl_.get();

  svr.Get("/api/pairs/next", guarded([impl](const httplib::Request& req, httplib::Response& res) {
    const auto pair = impl->store.next_pending(filter_from(req));
    json body{{"pair", pair ? json(*pair) : json(nullptr)}};
    if (pair) {
      const auto item = impl->store.get(pair->pair_id);
      body["label"] = item.label ? json(*item.label) : json(nullptr);
    }
    body["stats"] = impl->store.stats().to_json();
    send_json(res, body);
  }));

  svr.Get(R"(/api/pairs/([^/]+))", guarded([impl](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    auto body = impl->store.get(id).to_json();
    json hist = json::array();
    for (const auto& d : impl->store.history(id)) hist.push_back(to_json(d));
    body["history"] = std::move(hist);
    send_json(res, body);
  }));

  svr.Post("/api/decisions", guarded([impl](const httplib::Request& req, httplib::Response& res) {
    const auto decision = decision_from_json(parse_body(req));
    const auto state = impl->store.submit(decision);
    send_json(res, {{"pair_id", decision.pair_id},
                    {"state", to_string(state)},
                    {"stats", impl->store.stats().to_json()}});
  }));

  svr.Get("/api/stats", guarded([impl](const httplib::Request&, httplib::Response& res) {
    send_json(res, impl->store.stats().to_json());
  }));

  svr.Post("/api/export", guarded([impl](const httplib::Request& req, httplib::Response& res) {
    const json body = req.body.empty() ? json::object() : parse_body(req);
    const auto format = dataset::parse_export_format(body.value("format", std::string("qa_jsonl")));
    const auto name = body.value("name", std::string("reviewed"));
    static const std::regex kSafeName("[A-Za-z0-9_.-]{1,64}");
    if (!std::regex_match(name, kSafeName) || name.front() == '.') {
      raise(ErrorKind::Parameter, fmt::format("export name '{}' must match [A-Za-z0-9_.-]+", name));
    }
    const auto path = impl->options.export_dir / fmt::format("{}.{}.jsonl", name, dataset::to_string(format));
    dataset::ExportOptions opts;
    opts.name = name;
    opts.method_tag = "";
    opts.created_at = impl->options.created_at;
    auto manifest = impl->store.export_accepted(format, path, opts);
    write_json_file(path.string() + ".manifest.json", manifest.to_json());
    send_json(res, {{"path", path.string()}, {"manifest", manifest.to_json()}});
  }));

  if (impl_->options.static_dir) {
    if (!svr.set_mount_point("/", impl_->options.static_dir->string())) {
      raise(ErrorKind::Io, fmt::format("static directory {} does not exist", impl_->options.static_dir->string()));
    }
  }
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start() {
  port_ = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ReviewServer::run() {
  port_ = impl_->bind();
  spdlog::info("review server listening on http://{}:{}", impl_->options.host, port_);
  impl_->server.listen_after_bind();
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace qakit::review
