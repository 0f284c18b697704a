#pragma once

#include <string>

#include <httplib.h>

#include "hi3/service.hpp"

namespace hi3::service {

/// Route every request under /sessions through `api`.
inline void bind(httplib::Server& server, Api& api) {
  auto handler = [&api](const httplib::Request& req, httplib::Response& res) {
    const HttpResult r = api.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  const std::string pattern = R"(/sessions(/.*)?)";
  server.Get(pattern, handler);
  server.Post(pattern, handler);
  server.Delete(pattern, handler);
  server.Put(pattern, handler);
  server.Patch(pattern, handler);
}

}  // namespace hi3::service
