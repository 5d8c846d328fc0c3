#include "graalf/service.hpp"

#include <iostream>

#include "graalf/export.hpp"

namespace graalf {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

Service::Service(ServiceOptions opts)
    : opts_(std::move(opts)), store_(opts_.store), engine_cfg_(opts_.engine) {
  opts_.store.validate();
  if (opts_.store_dir) {
    journal_ = std::make_unique<JournalBackend>(*opts_.store_dir);
    const auto base = *opts_.store_dir / "base";
    if (fs::exists(base / "vertices.tsv")) {
      store_.replace(load_two_table(base, opts_.store.level));
    }
    replay_journal();
  }
  engine_ = std::make_unique<QueryEngine>(store_, journal_.get());
  monitors_ = std::make_unique<MonitorRegistry>(*engine_);
}

Service::~Service() {
  try {
    stop();
  } catch (const std::exception& e) {
    std::cerr << "graalf: shutdown flush failed: " << e.what() << "\n";
  }
}

void Service::replay_journal() {
  for (const auto& rec : journal_->scan_range(TimeWindow{})) {
    try {
      auto r = processor_.process(rec);
      if (r.graph) store_.insert(*r.graph);
    } catch (const Error&) {
      // Rows were accepted once; a failure here means a hand-edited journal.
    }
  }
}

void Service::start() {
  std::lock_guard lock(run_mu_);
  if (running_) return;
  running_ = true;
  drain_thread_ = std::thread([this] { drain_loop(); });
  monitor_thread_ = std::thread([this] { monitor_loop(); });
}

void Service::stop() {
  {
    std::lock_guard lock(run_mu_);
    running_ = false;
  }
  run_cv_.notify_all();
  if (drain_thread_.joinable()) drain_thread_.join();
  if (monitor_thread_.joinable()) monitor_thread_.join();
  flush();
}

void Service::flush() {
  store_.drain();
  if (journal_) journal_->flush();
}

void Service::drain_loop() {
  std::unique_lock lock(run_mu_);
  while (running_) {
    run_cv_.wait_for(lock, opts_.drain_period);
    lock.unlock();
    try {
      flush();
    } catch (const std::exception& e) {
      std::cerr << "graalf: drain failed: " << e.what() << "\n";
    }
    lock.lock();
  }
}

void Service::monitor_loop() {
  auto next_stats = Clock::now() + opts_.stats_period;
  std::unique_lock lock(run_mu_);
  while (running_) {
    auto wake = next_stats;
    if (auto due = monitors_->next_due(); due && *due < wake) wake = *due;
    run_cv_.wait_until(lock, wake);
    if (!running_) break;
    lock.unlock();
    const auto now = Clock::now();
    poll_monitors(now);
    if (now >= next_stats) {
      auto s = stats_json();
      s["type"] = "stats";
      bus_.publish(s.dump());
      expire_sessions(now);
      next_stats = now + opts_.stats_period;
    }
    lock.lock();
  }
}

std::vector<Notification> Service::poll_monitors(Clock::time_point now) {
  auto notes = monitors_->poll(now);
  for (const auto& n : notes) bus_.publish(notification_to_json(n).dump());
  return notes;
}

IngestStats Service::ingest(std::istream& in, const IngestOptions& opts) {
  std::lock_guard lock(ingest_mu_);
  return ingest_stream(in, opts, processor_, *this);
}

void Service::on_record(const EventRecord& rec, const LineGraph* lg) {
  if (journal_) journal_->append(rec);
  if (lg) store_.enqueue(*lg);
  ++records_;
}

void Service::ingest_record(const EventRecord& rec) {
  std::lock_guard lock(ingest_mu_);
  auto r = processor_.process(rec);
  if (r.kind == EventProcessor::Kind::Graph || r.kind == EventProcessor::Kind::Lifecycle) {
    on_record(rec, r.graph ? &*r.graph : nullptr);
  }
}

std::string Service::create_session() {
  std::lock_guard lock(sessions_mu_);
  std::string id = "s" + std::to_string(next_session_++);
  sessions_.emplace(id, std::make_shared<Session>(id));
  return id;
}

std::shared_ptr<Session> Service::session(const std::string& id) {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "unknown session " + id);
  return it->second;
}

std::size_t Service::expire_sessions(Clock::time_point now) {
  std::lock_guard lock(sessions_mu_);
  return std::erase_if(sessions_, [&](const auto& kv) {
    return now - kv.second->last_used() > opts_.session_ttl;
  });
}

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

Service::Outcome Service::run(std::string_view text, Session* session) {
  auto stmt = parse_query(text);
  if (auto* cmd = std::get_if<ConfigCommand>(&stmt)) return apply(*cmd);
  return engine_->execute(std::get<QueryAst>(stmt), session, engine_config());
}

std::string Service::apply(const ConfigCommand& cmd) {
  if (cmd.key == ConfigKey::Mode || cmd.key == ConfigKey::DepthLimit) {
    std::lock_guard lock(cfg_mu_);
    if (cmd.key == ConfigKey::Mode) {
      engine_cfg_.mode = cmd.value == "verbose" ? RenderMode::Verbose : RenderMode::Normal;
      return "mode = " + cmd.value;
    }
    engine_cfg_.depth_limit = std::stoull(cmd.value);
    return "depth limit = " + cmd.value;
  }
  auto cfg = store_.config();
  std::string ack;
  switch (cmd.key) {
    case ConfigKey::Compression:
      cfg.level = *parse_compression_level(cmd.value);
      ack = "compression = " + cmd.value;
      break;
    case ConfigKey::MemoryLimit:
      cfg.memory_limit_bytes = std::stoull(cmd.value);
      ack = "memory_limit = " + cmd.value + " bytes";
      break;
    case ConfigKey::EvictThreshold:
      cfg.evict_threshold = std::stod(cmd.value);
      ack = "evict_threshold = " + cmd.value;
      break;
    default:
      break;
  }
  store_.set_config(cfg);
  auto rep = store_.evict_if_needed();
  if (rep.evicted_nodes > 0) ack += " (evicted " + std::to_string(rep.evicted_nodes) + " nodes)";
  return ack;
}

EngineConfig Service::engine_config() const {
  std::lock_guard lock(cfg_mu_);
  return engine_cfg_;
}

nlohmann::json Service::stats_json() const {
  nlohmann::json j;
  {
    auto view = store_.read();
    j["nodes"] = view->node_count();
    j["edges"] = view->edge_count();
    j["usage_bytes"] = view->usage_bytes();
  }
  const auto cfg = store_.config();
  j["compression"] = std::string(to_string(cfg.level));
  j["memory_limit"] = cfg.memory_limit_bytes;
  j["evict_threshold"] = cfg.evict_threshold;
  j["evicted_total"] = store_.evicted_total();
  j["pending"] = store_.pending();
  j["records"] = records_.load();
  if (journal_) j["journal_rows"] = journal_->stats().rows;
  j["sessions"] = session_count();
  j["monitors"] = monitors_->list().size();
  return j;
}

}  // namespace graalf
