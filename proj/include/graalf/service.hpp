/**
 * @file service.hpp
 * @brief The long-running process: store, journal, engine, sessions,
 *        monitors and their background threads.
 *
 * A store directory holds `journal.tsv` and, optionally, an imported base
 * snapshot under `base/`. Opening a directory loads the base snapshot and
 * replays the journal on top of it.
 */
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>

#include "json.hpp"

#include "graalf/backend.hpp"
#include "graalf/engine.hpp"
#include "graalf/ingest.hpp"
#include "graalf/monitor.hpp"
#include "graalf/query.hpp"
#include "graalf/store.hpp"

namespace graalf {

struct ServiceOptions {
  /// Journal and base snapshot location; without one nothing is persisted
  /// and evicted data is lost.
  std::optional<std::filesystem::path> store_dir;
  StoreConfig store;
  EngineConfig engine;
  std::chrono::milliseconds drain_period{20};
  std::chrono::milliseconds stats_period{1000};
  std::chrono::seconds session_ttl{3600};
};

class Service : public RecordSink {
 public:
  /// Opens the store directory (base snapshot + journal replay). Background
  /// threads are not started until start().
  explicit Service(ServiceOptions opts = {});
  ~Service() override;

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Starts the drain and monitor threads.
  void start();
  /// Stops the threads and flushes.
  void stop();
  /// Drains the insertion queue and flushes the journal.
  void flush();

  // Ingestion. Safe to call from any thread; records are journaled and
  // queued for the store.
  IngestStats ingest(std::istream& in, const IngestOptions& opts);
  void on_record(const EventRecord& rec, const LineGraph* lg) override;
  /// Processes one already-parsed record.
  void ingest_record(const EventRecord& rec);
  /// Runs `fn` with the shared processor held, e.g. to drive a LineIngestor.
  template <typename Fn>
  auto with_processor(Fn&& fn) {
    std::lock_guard lock(ingest_mu_);
    return fn(processor_);
  }

  // Sessions.
  std::string create_session();
  /// Throws Error{NotFound}.
  std::shared_ptr<Session> session(const std::string& id);
  std::size_t expire_sessions(std::chrono::steady_clock::time_point now =
                                  std::chrono::steady_clock::now());
  std::size_t session_count() const;

  /// Result of running one statement: a query result or an acknowledgement
  /// for a config command.
  using Outcome = std::variant<QueryResult, std::string>;
  /// Parses and runs `text`. Throws SyntaxError, EmptyCriteria,
  /// InvalidConfig, InvalidArgument.
  Outcome run(std::string_view text, Session* session);
  /// Applies a config command live; returns the acknowledgement text.
  std::string apply(const ConfigCommand& cmd);

  EngineConfig engine_config() const;

  /// Evaluates due monitors now and publishes their notifications.
  std::vector<Notification> poll_monitors(
      std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());

  MemoryStore& store() noexcept { return store_; }
  const QueryEngine& engine() const noexcept { return *engine_; }
  BackendInterface* backend() noexcept { return journal_.get(); }
  MonitorRegistry& monitors() noexcept { return *monitors_; }
  EventBus& events() noexcept { return bus_; }

  nlohmann::json stats_json() const;

 private:
  void replay_journal();
  void drain_loop();
  void monitor_loop();

  ServiceOptions opts_;
  MemoryStore store_;
  std::unique_ptr<JournalBackend> journal_;
  std::unique_ptr<QueryEngine> engine_;
  std::unique_ptr<MonitorRegistry> monitors_;
  EventBus bus_;

  std::mutex ingest_mu_;
  EventProcessor processor_;
  std::atomic<std::uint64_t> records_{0};

  mutable std::mutex cfg_mu_;
  EngineConfig engine_cfg_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;

  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::thread drain_thread_;
  std::thread monitor_thread_;
};

}  // namespace graalf
