/**
 * @file console.hpp
 * @brief Line-oriented investigation console.
 *
 * Queries are handed to a worker thread in FIFO order so the prompt keeps
 * reading while a query runs; results are announced when they finish.
 * Besides statements of the query language the console understands
 *   export <path> [dot|json]   write the session graph
 *   stats                      store and journal counters
 *   quit | exit
 */
#pragma once

#include <condition_variable>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "graalf/service.hpp"

namespace graalf {

class Console {
 public:
  Console(Service& service, std::ostream& out, bool prompt = false);
  ~Console();

  /// Reads until EOF or quit, then waits for queued queries and flushes.
  void run(std::istream& in);
  /// Handles one input line. Returns false on quit.
  bool handle(const std::string& line);
  /// Blocks until every queued query has been answered.
  void wait_idle();

  const Session& session() const { return *session_; }

 private:
  void worker();
  void execute(const std::string& text);
  void print(const std::string& text);

  Service& service_;
  std::ostream& out_;
  bool prompt_;
  std::shared_ptr<Session> session_;

  std::mutex out_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace graalf
