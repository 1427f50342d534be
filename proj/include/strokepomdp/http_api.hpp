#pragma once

#include <httplib.h>

#include "service.hpp"

namespace strokepomdp {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nullptr;
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "bad-json", "", e.what());
  }
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    send_json(res, e.status, e.to_json());
  } catch (const std::exception& e) {
    send_json(res, 500, ServiceError(500, "internal", "", e.what()).to_json());
  }
}

}  // namespace detail

/// Registers the /v1 session routes on `server`.
inline void mount_v1(httplib::Server& server, SessionService& svc) {
  using detail::guarded;
  using detail::send_json;
  const std::string id = R"(/v1/sessions/([0-9a-zA-Z_-]+))";

  server.Post("/v1/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, svc.create(detail::parse_body(req))); });
  });
  server.Get(id, [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.get(req.matches[1])); });
  });
  server.Post(id + "/step", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.step(req.matches[1], detail::parse_body(req))); });
  });
  server.Post(id + "/recommend", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res,
            [&] { send_json(res, 200, svc.recommend(req.matches[1], detail::parse_body(req))); });
  });
  server.Delete(id, [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      svc.remove(req.matches[1]);
      res.status = 204;
    });
  });
}

}  // namespace strokepomdp
