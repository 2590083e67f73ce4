// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// HTTP/1.1 front end for RecommendService.
//
//   POST /v1/recommendations        {user_id?, events?, k?} -> response
//   GET  /v1/items/{id}/similar?k=K -> top-K by the item's own embedding
//   POST /admin/reindex             {items_path} -> {index_version}
//   GET  /healthz                   -> {status, model_version, index_version}

#pragma once

#include <functional>
#include <memory>
#include <string>

#include "mercatran/error.hpp"
#include "mercatran/service.hpp"

namespace mercatran {

int HttpStatusFor(ErrorCode code);

// The port from MERCATRAN_PORT when set and valid, else `fallback`.
int ResolvePort(int fallback);

class HttpServer {
 public:
  // Builds and installs a new index from a catalog path; returns the new
  // index version.
  using ReindexFn = std::function<std::string(const std::string& items_path)>;

  HttpServer(RecommendService& service, ReindexFn reindex);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port, or -1.
  int Bind(const std::string& host, int port);
  int BindToAnyPort(const std::string& host);
  // Blocks until Stop().
  bool ListenAfterBind();
  void Stop();
  void WaitUntilReady() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mercatran
