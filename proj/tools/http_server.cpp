#include "http_server.hpp"

#include <map>
#include <string>

#include "httplib.h"

namespace ckc::cli {

void install_routes(httplib::Server& server, ChatService& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    auto out = service.handle(req.method, req.path, query, req.body, req.get_header_value("Idempotency-Key"));
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(out.body, "application/json; charset=utf-8");
  };
  const std::string any = R"(/.*)";
  server.Get(any, handler);
  server.Post(any, handler);
  server.Put(any, handler);
  server.Patch(any, handler);
  server.Delete(any, handler);
  server.Options(any, [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
    res.status = 204;
  });
}

}  // namespace ckc::cli
