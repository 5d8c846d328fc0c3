#include "graalf/monitor.hpp"

#include <algorithm>

#include "graalf/export.hpp"

namespace graalf {

using nlohmann::json;

namespace {

struct Fnv {
  std::uint64_t h = 14695981039346656037ull;

  void bytes(std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;  // field separator
    h *= 1099511628211ull;
  }
  void num(std::int64_t v) { bytes(std::to_string(v)); }
  void sig(const SignatureKey& s) {
    bytes(s.host.str());
    bytes(to_string(s.kind));
    bytes(s.local_id);
    num(s.epoch);
  }
};

Timestamp wall_now() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::uint64_t fingerprint(const ForensicGraph& g) {
  // std::map iteration is already sorted.
  Fnv f;
  f.num(static_cast<std::int64_t>(g.nodes.size()));
  for (const auto& [sig, n] : g.nodes) f.sig(sig);
  f.num(static_cast<std::int64_t>(g.edges.size()));
  for (const auto& [key, e] : g.edges) {
    f.sig(key.src);
    f.sig(key.dst);
    f.bytes(to_string(key.rel));
    f.num(e.count);
  }
  return f.h;
}

Notification diff_graphs(const ForensicGraph& before, const ForensicGraph& after) {
  Notification n;
  for (const auto& [sig, node] : after.nodes) {
    if (!before.nodes.count(sig)) n.added_nodes.push_back(node);
  }
  for (const auto& [sig, node] : before.nodes) {
    if (!after.nodes.count(sig)) n.removed_nodes.push_back(sig);
  }
  for (const auto& [key, e] : after.edges) {
    auto it = before.edges.find(key);
    if (it == before.edges.end() || it->second.count != e.count ||
        it->second.timestamps != e.timestamps) {
      n.added_edges.push_back(e);
    }
  }
  for (const auto& [key, e] : before.edges) {
    if (!after.edges.count(key)) n.removed_edges.push_back(key);
  }
  return n;
}

json notification_to_json(const Notification& n) {
  ForensicGraph added;
  for (const auto& node : n.added_nodes) added.add_node(node);
  for (const auto& e : n.added_edges) added.edges[key_of(e)] = e;
  json removed_nodes = json::array();
  for (const auto& s : n.removed_nodes) removed_nodes.push_back(sig_to_json(s));
  json removed_edges = json::array();
  for (const auto& k : n.removed_edges) {
    removed_edges.push_back(
        {{"src", sig_to_json(k.src)}, {"dst", sig_to_json(k.dst)}, {"rel", to_string(k.rel)}});
  }
  auto g = graph_to_json(added);
  return {{"type", "notification"},
          {"monitor_id", n.monitor_id},
          {"ts", n.ts},
          {"added_nodes", g["nodes"]},
          {"added_edges", g["edges"]},
          {"removed_nodes", removed_nodes},
          {"removed_edges", removed_edges}};
}

json monitor_to_json(const MonitorSpec& m) {
  return {{"id", m.id},
          {"text", m.text},
          {"interval_ms", m.interval_ms},
          {"fingerprint", m.last_fingerprint},
          {"notifications", m.notifications},
          {"last_error", m.last_error}};
}

MonitorRegistry::MonitorRegistry(const QueryEngine& engine) : engine_(engine) {}

MonitorSpec MonitorRegistry::register_monitor(const std::string& text,
                                              std::int64_t interval_ms, TimePoint now) {
  if (interval_ms < kMinIntervalMs) {
    throw Error(ErrorCode::InvalidArgument,
                "monitor interval must be at least " + std::to_string(kMinIntervalMs) + " ms");
  }
  auto stmt = parse_query(text);
  auto* ast = std::get_if<QueryAst>(&stmt);
  if (!ast) throw Error(ErrorCode::InvalidArgument, "a monitor needs a query, not a command");
  validate_ast(*ast);

  Entry e;
  e.last = engine_.execute(*ast).graph;
  e.spec.text = text;
  e.spec.query = *ast;
  e.spec.interval_ms = interval_ms;
  e.spec.last_fingerprint = fingerprint(e.last);
  e.due = now + std::chrono::milliseconds(interval_ms);

  std::lock_guard lock(mu_);
  e.spec.id = "m" + std::to_string(next_id_++);
  auto spec = e.spec;
  monitors_.emplace(spec.id, std::move(e));
  return spec;
}

bool MonitorRegistry::remove(const std::string& id) {
  std::lock_guard lock(mu_);
  return monitors_.erase(id) > 0;
}

std::vector<MonitorSpec> MonitorRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<MonitorSpec> out;
  for (const auto& [id, e] : monitors_) out.push_back(e.spec);
  return out;
}

std::optional<MonitorRegistry::TimePoint> MonitorRegistry::next_due() const {
  std::lock_guard lock(mu_);
  std::optional<TimePoint> due;
  for (const auto& [id, e] : monitors_) {
    if (!due || e.due < *due) due = e.due;
  }
  return due;
}

std::vector<Notification> MonitorRegistry::poll(TimePoint now) {
  // Queries run outside the lock so registration is never blocked on them.
  std::vector<std::pair<std::string, QueryAst>> due;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, e] : monitors_) {
      if (e.due > now) continue;
      due.emplace_back(id, e.spec.query);
      while (e.due <= now) e.due += std::chrono::milliseconds(e.spec.interval_ms);
    }
  }

  std::vector<Notification> out;
  for (const auto& [id, ast] : due) {
    std::optional<ForensicGraph> g;
    std::string error;
    try {
      g = engine_.execute(ast).graph;
    } catch (const std::exception& ex) {
      error = ex.what();
    }
    std::lock_guard lock(mu_);
    auto it = monitors_.find(id);
    if (it == monitors_.end()) continue;
    auto& e = it->second;
    e.spec.last_error = error;
    if (!g) continue;
    const auto fp = fingerprint(*g);
    if (fp == e.spec.last_fingerprint) continue;
    Notification n = diff_graphs(e.last, *g);
    n.monitor_id = id;
    n.ts = wall_now();
    e.last = std::move(*g);
    e.spec.last_fingerprint = fp;
    ++e.spec.notifications;
    out.push_back(std::move(n));
  }
  return out;
}

std::optional<std::string> EventBus::Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
  auto ev = std::move(queue_.front());
  queue_.pop_front();
  return ev;
}

std::size_t EventBus::Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::shared_ptr<EventBus::Subscription> EventBus::subscribe(std::size_t capacity) {
  auto sub = std::make_shared<Subscription>();
  sub->capacity_ = std::max<std::size_t>(capacity, 1);
  std::lock_guard lock(mu_);
  subs_.push_back(sub);
  return sub;
}

void EventBus::publish(const std::string& event) {
  std::vector<std::shared_ptr<Subscription>> live;
  {
    std::lock_guard lock(mu_);
    std::erase_if(subs_, [](const auto& w) { return w.expired(); });
    for (const auto& w : subs_) {
      if (auto s = w.lock()) live.push_back(std::move(s));
    }
  }
  for (const auto& s : live) {
    {
      std::lock_guard lock(s->mu_);
      if (s->queue_.size() >= s->capacity_) {
        s->queue_.pop_front();
        ++s->dropped_;
      }
      s->queue_.push_back(event);
    }
    s->cv_.notify_one();
  }
}

std::size_t EventBus::subscribers() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(subs_.begin(), subs_.end(), [](const auto& w) { return !w.expired(); }));
}

}  // namespace graalf
