// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/http_server.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include <httplib.h>

namespace mercatran {

namespace {

using nlohmann::json;

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void ReplyError(httplib::Response& res, ErrorCode code, const std::string& message) {
  Reply(res, HttpStatusFor(code), {{"error", std::string(ErrorCodeName(code))}, {"message", message}});
}

json ParseBody(const httplib::Request& req) {
  json body = json::parse(req.body, nullptr, false);
  if (body.is_discarded()) throw Error(ErrorCode::kBadRequest, "body is not valid JSON");
  return body;
}

// Runs a handler, mapping library errors to their HTTP status and anything
// else to 500.
template <typename Fn>
void Guard(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    ReplyError(res, e.code(), e.what());
  } catch (const std::exception& e) {
    Reply(res, 500, {{"error", "Internal"}, {"message", e.what()}});
  }
}

json ItemsToJson(const std::vector<RecommendedItem>& items) {
  json out = json::array();
  for (const auto& it : items) {
    out.push_back({{"item_id", it.item_id},
                   {"score", it.score},
                   {"name", it.info.name},
                   {"brand_name", it.info.brand_name},
                   {"price", it.info.price ? json(*it.info.price) : json(nullptr)}});
  }
  return out;
}

}  // namespace

int HttpStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadRequest:
    case ErrorCode::kEmptyHistory:
    case ErrorCode::kHistoryTooLong:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMalformedLine:
    case ErrorCode::kMissingField:
    case ErrorCode::kUnknownEventType:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kIoError:
    case ErrorCode::kCorruptFile:
      return 400;
    case ErrorCode::kUnknownItem:
    case ErrorCode::kUnknownUser:
      return 404;
    case ErrorCode::kNotReady:
      return 503;
    default:
      return 500;
  }
}

int ResolvePort(int fallback) {
  const char* env = std::getenv("MERCATRAN_PORT");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  const long port = std::strtol(env, &end, 10);
  if (*end != '\0' || port < 1 || port > 65535) return fallback;
  return static_cast<int>(port);
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(RecommendService& service, ReindexFn reindex) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;

  srv.Post("/v1/recommendations", [&service](const httplib::Request& req, httplib::Response& res) {
    Guard(res, [&] {
      const RecommendRequest request = RecommendRequest::FromJson(ParseBody(req));
      Reply(res, 200, service.Recommend(request).ToJson());
    });
  });

  srv.Get(R"(/v1/items/([^/]+)/similar)", [&service](const httplib::Request& req, httplib::Response& res) {
    Guard(res, [&] {
      int k = 10;
      if (req.has_param("k")) {
        const std::string raw = req.get_param_value("k");
        char* end = nullptr;
        const long v = std::strtol(raw.c_str(), &end, 10);
        if (raw.empty() || *end != '\0') throw Error(ErrorCode::kBadRequest, "k must be an integer");
        k = static_cast<int>(std::clamp<long>(v, -1, RecommendService::kMaxK + 1));
      }
      std::string version;
      const std::string item_id = req.matches[1];
      auto items = service.Similar(item_id, k, &version);
      Reply(res, 200, {{"item_id", item_id}, {"items", ItemsToJson(items)}, {"index_version", version},
                       {"model_version", service.model_version()}});
    });
  });

  srv.Post("/admin/reindex", [reindex = std::move(reindex)](const httplib::Request& req, httplib::Response& res) {
    Guard(res, [&] {
      const json body = ParseBody(req);
      if (!body.is_object() || !body.contains("items_path") || !body["items_path"].is_string()) {
        throw Error(ErrorCode::kBadRequest, "items_path is required");
      }
      if (!reindex) throw Error(ErrorCode::kNotReady, "reindexing is not configured");
      Reply(res, 200, {{"index_version", reindex(body["items_path"].get<std::string>())}});
    });
  });

  srv.Get("/healthz", [&service](const httplib::Request&, httplib::Response& res) {
    const auto snap = service.snapshot();
    Reply(res, 200, {{"status", snap ? "ok" : "no_index"},
                     {"model_version", service.model_version()},
                     {"index_version", snap ? json(snap->version) : json(nullptr)}});
  });
}

HttpServer::~HttpServer() { Stop(); }

int HttpServer::Bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port) ? port : -1; }

int HttpServer::BindToAnyPort(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::ListenAfterBind() { return impl_->server.listen_after_bind(); }

void HttpServer::Stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::WaitUntilReady() const { impl_->server.wait_until_ready(); }

}  // namespace mercatran
