#include "graalf/server.hpp"

#include <atomic>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "graalf/export.hpp"

namespace graalf {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::IoError: return 503;
    default: return 400;
  }
}

namespace {

void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::exception& ex) {
  json j = {{"message", ex.what()}};
  int status = 500;
  if (const auto* e = dynamic_cast<const Error*>(&ex)) {
    status = http_status(e->code());
    j["error"] = std::string(to_string(e->code()));
    if (const auto* s = dynamic_cast<const SyntaxError*>(e)) {
      j["token"] = s->token();
      j["offset"] = s->offset();
      j["expected"] = s->expected();
    }
  } else if (dynamic_cast<const json::exception*>(&ex)) {
    status = 400;
    j["error"] = "InvalidArgument";
  } else {
    j["error"] = "Internal";
  }
  send_json(res, j, status);
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const std::exception& ex) {
      send_error(res, ex);
    }
  };
}

}  // namespace

struct ApiServer::Impl {
  Service& service;
  httplib::Server http;
  std::atomic<bool> stopping{false};
  std::thread thread;
  bool bound = false;

  explicit Impl(Service& s) : service(s) { routes(); }

  void routes() {
    http.Post("/api/sessions", guarded([this](const auto&, auto& res) {
                send_json(res, {{"session_id", service.create_session()}});
              }));

    http.Post(R"(/api/sessions/([^/]+)/query)", guarded([this](const auto& req, auto& res) {
                auto session = service.session(req.matches[1]);
                const auto body = json::parse(req.body);
                auto outcome = service.run(body.at("text").template get<std::string>(),
                                           session.get());
                if (auto* ack = std::get_if<std::string>(&outcome)) {
                  send_json(res, {{"ack", *ack}});
                } else {
                  send_json(res, result_to_json(std::get<QueryResult>(outcome)));
                }
              }));

    http.Get(R"(/api/sessions/([^/]+)/graph)", guarded([this](const auto& req, auto& res) {
               auto session = service.session(req.matches[1]);
               send_json(res, graph_to_json(session->graph()));
             }));

    http.Post("/api/monitors", guarded([this](const auto& req, auto& res) {
                const auto body = json::parse(req.body);
                const auto interval =
                    body.value("interval_ms", MonitorRegistry::kDefaultIntervalMs);
                auto spec = service.monitors().register_monitor(
                    body.at("text").template get<std::string>(), interval);
                send_json(res, monitor_to_json(spec));
              }));

    http.Get("/api/monitors", guarded([this](const auto&, auto& res) {
               json arr = json::array();
               for (const auto& m : service.monitors().list()) arr.push_back(monitor_to_json(m));
               send_json(res, arr);
             }));

    http.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
      auto sub = service.events().subscribe();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, sub](std::size_t, httplib::DataSink& sink) {
            if (stopping) return false;
            auto ev = sub->next(std::chrono::milliseconds(250));
            const std::string frame = ev ? "data: " + *ev + "\n\n" : std::string(": keepalive\n\n");
            return sink.write(frame.data(), frame.size());
          });
    });

    http.Get(R"(/api/export/([^/]+))", guarded([this](const auto& req, auto& res) {
               auto session = service.session(req.matches[1]);
               const std::string fmt_text =
                   req.has_param("format") ? req.get_param_value("format") : "json";
               auto fmt = parse_export_format(fmt_text);
               if (!fmt) throw Error(ErrorCode::InvalidArgument, "format must be dot or json");
               res.set_content(export_string(session->graph(), *fmt, service.engine_config().mode),
                               *fmt == ExportFormat::Dot ? "text/vnd.graphviz" : "application/json");
             }));

    http.Post("/api/ingest", guarded([this](const auto& req, auto& res) {
                IngestOptions opts;
                if (req.has_param("format")) {
                  auto f = parse_log_format(req.get_param_value("format"));
                  if (!f) throw Error(ErrorCode::InvalidArgument, "unknown log format");
                  opts.format = *f;
                }
                if (req.has_param("host")) opts.host = HostId(req.get_param_value("host"));
                if (req.has_param("sysdig_format")) {
                  opts.sysdig_format = req.get_param_value("sysdig_format");
                }
                std::istringstream in(req.body);
                auto st = service.ingest(in, opts);
                service.flush();
                send_json(res, {{"parsed", st.parsed},
                                {"state_only", st.state_only},
                                {"skipped", st.skipped},
                                {"emitted_nodes", st.emitted_nodes},
                                {"emitted_edges", st.emitted_edges}});
              }));

    http.Get("/api/stats", guarded([this](const auto&, auto& res) {
               send_json(res, service.stats_json());
             }));
  }
};

ApiServer::ApiServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) {
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return bound;
}

void ApiServer::serve() {
  if (!impl_->bound) throw Error(ErrorCode::InvalidArgument, "server is not bound");
  impl_->http.listen_after_bind();
}

void ApiServer::start() {
  if (!impl_->bound) throw Error(ErrorCode::InvalidArgument, "server is not bound");
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void ApiServer::stop() {
  impl_->stopping = true;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace graalf
