#include "arbor/server.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers.
#include <httplib.h>

namespace arbor::server {

struct HttpServer::Impl {
  httplib::Server http;
};

namespace {

void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

// Wraps a handler so that unexpected exceptions become 500 responses.
template <typename F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      send(res, f(req));
    } catch (const Error& e) {
      send(res, Response::error(500, to_string(e.code()), e.what()));
    } catch (const std::exception& e) {
      send(res, Response::error(500, "Internal", e.what()));
    }
  };
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>()) {
  auto& h = impl_->http;
  Service* s = &service;
  h.Get("/images", guarded([s](const httplib::Request&) { return s->list_images(); }));
  h.Get(R"(/images/([^/]+))", guarded([s](const httplib::Request& r) { return s->get_image(r.matches[1]); }));
  h.Get(R"(/annotations/([^/]+))", guarded([s](const httplib::Request& r) { return s->get_annotation(r.matches[1]); }));
  h.Put(R"(/annotations/([^/]+))",
        guarded([s](const httplib::Request& r) { return s->put_annotation(r.matches[1], r.body); }));
  h.Get(R"(/epipolar/([^/]+)/([^/]+)/([^/]+))", guarded([s](const httplib::Request& r) {
          double x = 0, y = 0;
          try {
            std::size_t nx = 0, ny = 0;
            const std::string sx = r.matches[2], sy = r.matches[3];
            x = std::stod(sx, &nx);
            y = std::stod(sy, &ny);
            if (nx != sx.size() || ny != sy.size()) throw std::invalid_argument("trailing characters");
          } catch (const std::exception&) {
            return Response::error(400, "BAD_REQUEST", "x and y must be numbers");
          }
          return s->get_epipolar(r.matches[1], x, y);
        }));
  h.Post(R"(/trace/([^/]+))", guarded([s](const httplib::Request& r) { return s->post_trace(r.matches[1], r.body); }));
  h.Get(R"(/flow/([^/]+))", guarded([s](const httplib::Request& r) { return s->get_flow(r.matches[1]); }));
  h.Get(R"(/overlay/([^/]+))", guarded([s](const httplib::Request& r) { return s->get_overlay(r.matches[1]); }));
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->http.listen_after_bind(); }

void HttpServer::stop() { impl_->http.stop(); }

}  // namespace arbor::server
