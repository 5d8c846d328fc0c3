#include "graalf/console.hpp"

#include <iomanip>
#include <iostream>
#include <sstream>

#include "graalf/export.hpp"

namespace graalf {

namespace {

constexpr std::size_t kMaxRows = 40;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string first_word(const std::string& s) {
  std::string w = s.substr(0, s.find_first_of(" \t"));
  for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return w;
}

std::string format_result(const QueryResult& r, RenderMode mode) {
  const auto rg = render_graph(r.graph, mode);
  std::ostringstream o;
  o << "[step " << r.step << "] " << rg.nodes.size() << " nodes, " << rg.edges.size()
    << " edges, " << r.stats.seeds << " seeds, " << std::fixed << std::setprecision(2)
    << r.stats.total_ms << " ms";
  if (r.stats.backend_calls) o << ", " << r.stats.backend_calls << " backend calls";
  if (r.stats.degraded) o << " (degraded: " << r.stats.warning << ")";
  o << "\n";
  std::size_t rows = 0;
  for (const auto& n : rg.nodes) {
    if (rows++ == kMaxRows) {
      o << "  ... " << rg.nodes.size() - kMaxRows << " more nodes\n";
      break;
    }
    o << "  " << std::left << std::setw(8) << to_string(n.kind) << " step " << n.step << "  "
      << n.title << "\n";
  }
  rows = 0;
  for (const auto& e : rg.edges) {
    if (rows++ == kMaxRows) {
      o << "  ... " << rg.edges.size() - kMaxRows << " more edges\n";
      break;
    }
    auto title = [&](const SignatureKey& s) {
      auto it = r.graph.nodes.find(s);
      return it == r.graph.nodes.end() ? s.local_id : it->second.title;
    };
    o << "  " << title(e.src) << " -[" << e.label << "]-> " << title(e.dst) << "\n";
  }
  return o.str();
}

}  // namespace

Console::Console(Service& service, std::ostream& out, bool prompt)
    : service_(service), out_(out), prompt_(prompt) {
  session_ = service_.session(service_.create_session());
  thread_ = std::thread([this] { worker(); });
}

Console::~Console() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Console::print(const std::string& text) {
  std::lock_guard lock(out_mu_);
  out_ << text;
  out_.flush();
}

void Console::run(std::istream& in) {
  std::string line;
  while (true) {
    if (prompt_) print("graalf> ");
    if (!std::getline(in, line)) break;
    if (!handle(line)) break;
  }
  wait_idle();
  service_.flush();
}

bool Console::handle(const std::string& raw) {
  const std::string line = trim(raw);
  if (line.empty() || line.front() == '#') return true;
  const std::string word = first_word(line);
  if (word == "quit" || word == "exit") return false;
  if (word == "stats") {
    wait_idle();
    print(service_.stats_json().dump(2) + "\n");
    return true;
  }
  if (word == "export") {
    wait_idle();
    std::istringstream args(line.substr(6));
    std::string path, fmt = "dot";
    args >> path >> fmt;
    try {
      auto f = parse_export_format(fmt);
      if (path.empty() || !f) throw Error(ErrorCode::InvalidArgument, "usage: export <path> [dot|json]");
      export_graph(session_->graph(), *f, path, service_.engine_config().mode);
      print("exported " + std::to_string(session_->graph().nodes.size()) + " nodes to " + path +
            "\n");
    } catch (const std::exception& e) {
      print(std::string("error: ") + e.what() + "\n");
    }
    return true;
  }
  if (word == "set" || word == "limit") {
    // Config applies in order with the queries typed before it.
    wait_idle();
    try {
      auto stmt = parse_query(line);
      print(service_.apply(std::get<ConfigCommand>(stmt)) + "\n");
    } catch (const std::exception& e) {
      print(std::string("error: ") + e.what() + "\n");
    }
    return true;
  }
  {
    std::lock_guard lock(mu_);
    queue_.push_back(line);
  }
  cv_.notify_all();
  return true;
}

void Console::wait_idle() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

void Console::worker() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;
    std::string text = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    execute(text);
    lock.lock();
    busy_ = false;
    cv_.notify_all();
  }
}

void Console::execute(const std::string& text) {
  try {
    service_.flush();
    auto outcome = service_.run(text, session_.get());
    if (auto* ack = std::get_if<std::string>(&outcome)) {
      print(*ack + "\n");
    } else {
      print(format_result(std::get<QueryResult>(outcome), service_.engine_config().mode));
    }
  } catch (const std::exception& e) {
    print(std::string("error: ") + e.what() + "\n");
  }
}

}  // namespace graalf
