/**
 * @file monitor.hpp
 * @brief Continuous queries and the notification fan-out.
 */
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "graalf/engine.hpp"

namespace graalf {

/// FNV-1a over sorted node signatures, edge keys and edge counts.
std::uint64_t fingerprint(const ForensicGraph& g);

struct Notification {
  std::string monitor_id;
  Timestamp ts = 0;  // wall clock, microseconds
  std::vector<ProvNode> added_nodes;
  std::vector<EventEdge> added_edges;  // new or changed
  std::vector<SignatureKey> removed_nodes;
  std::vector<EdgeKey> removed_edges;

  bool empty() const {
    return added_nodes.empty() && added_edges.empty() && removed_nodes.empty() &&
           removed_edges.empty();
  }
};

/// Delta from `before` to `after`.
Notification diff_graphs(const ForensicGraph& before, const ForensicGraph& after);

nlohmann::json notification_to_json(const Notification& n);

struct MonitorSpec {
  std::string id;
  std::string text;
  QueryAst query;
  std::int64_t interval_ms = 1000;
  std::uint64_t last_fingerprint = 0;
  std::size_t notifications = 0;
  std::string last_error;
};

nlohmann::json monitor_to_json(const MonitorSpec& m);

class MonitorRegistry {
 public:
  using TimePoint = std::chrono::steady_clock::time_point;

  static constexpr std::int64_t kMinIntervalMs = 100;
  static constexpr std::int64_t kDefaultIntervalMs = 1000;

  explicit MonitorRegistry(const QueryEngine& engine);

  /// Parses, validates and evaluates the baseline. Throws SyntaxError,
  /// EmptyCriteria, InvalidArgument (interval below the minimum).
  MonitorSpec register_monitor(const std::string& text,
                               std::int64_t interval_ms = kDefaultIntervalMs,
                               TimePoint now = std::chrono::steady_clock::now());
  bool remove(const std::string& id);
  std::vector<MonitorSpec> list() const;

  /// Re-evaluates every monitor due at `now`; one notification per monitor
  /// whose fingerprint changed. Failing monitors record last_error.
  std::vector<Notification> poll(TimePoint now = std::chrono::steady_clock::now());
  /// Earliest due time, if any monitor is registered.
  std::optional<TimePoint> next_due() const;

 private:
  struct Entry {
    MonitorSpec spec;
    ForensicGraph last;
    TimePoint due;
  };

  const QueryEngine& engine_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> monitors_;
  std::uint64_t next_id_ = 1;
};

/// Fan-out of serialized events to any number of subscribers. Publishing
/// never blocks; a full subscriber queue drops its oldest event.
class EventBus {
 public:
  class Subscription {
   public:
    /// Waits up to `timeout` for the next event.
    std::optional<std::string> next(std::chrono::milliseconds timeout);
    std::size_t dropped() const;

   private:
    friend class EventBus;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    std::size_t capacity_ = 0;
    std::size_t dropped_ = 0;
  };

  std::shared_ptr<Subscription> subscribe(std::size_t capacity = 1024);
  void publish(const std::string& event);
  std::size_t subscribers() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::weak_ptr<Subscription>> subs_;
};

}  // namespace graalf
