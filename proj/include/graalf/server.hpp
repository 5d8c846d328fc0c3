/**
 * @file server.hpp
 * @brief HTTP/JSON API over a Service.
 *
 *   POST /api/sessions                   -> {session_id}
 *   POST /api/sessions/{id}/query {text} -> {step, graph, stats} | {ack}
 *   GET  /api/sessions/{id}/graph        -> cumulative session graph
 *   POST /api/monitors {text, interval_ms}
 *   GET  /api/monitors
 *   GET  /api/events                     -> text/event-stream
 *   GET  /api/export/{id}?format=dot|json
 *   POST /api/ingest?format=&host=       -> ingestion counters
 *   GET  /api/stats
 *
 * Parse and criteria errors are 400 with {error, message}; unknown
 * sessions are 404.
 */
#pragma once

#include <memory>
#include <string>

#include "graalf/service.hpp"

namespace graalf {

class ApiServer {
 public:
  explicit ApiServer(Service& service);
  ~ApiServer();

  /// Binds to host:port (port 0 picks a free one) and returns the port.
  /// Throws IoError.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires bind().
  void serve();
  /// serve() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace graalf
