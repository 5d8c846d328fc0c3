// graalf command-line front end.

#include <unistd.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"

#include "graalf/console.hpp"
#include "graalf/export.hpp"
#include "graalf/server.hpp"
#include "graalf/service.hpp"

namespace fs = std::filesystem;
using namespace graalf;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct RootOptions {
  std::string store;
  std::string compress = "c1";
  std::uint64_t memory_limit = 0;
  double evict_threshold = 0.9;
};

struct IngestArgs {
  std::vector<std::string> files;
  std::string format = "audit";
  std::string host = "localhost";
  std::string header;
  std::string sysdig_format;
  bool follow = false;
};

ServiceOptions service_options(const RootOptions& root) {
  ServiceOptions o;
  if (!root.store.empty()) o.store_dir = fs::path(root.store);
  auto level = parse_compression_level(root.compress);
  if (!level) throw Error(ErrorCode::InvalidConfig, "--compress must be one of c0, c1, c2, c3");
  o.store.level = *level;
  o.store.memory_limit_bytes = root.memory_limit;
  o.store.evict_threshold = root.evict_threshold;
  o.store.validate();
  return o;
}

IngestOptions ingest_options(const IngestArgs& a) {
  IngestOptions o;
  auto f = parse_log_format(a.format);
  if (!f) throw Error(ErrorCode::InvalidArgument, "unknown --format " + a.format);
  o.format = *f;
  o.host = HostId(a.host);
  o.sysdig_format = a.sysdig_format;
  if (!a.header.empty()) o.header = CsvHeaderSpec::from_header_line(a.header);
  return o;
}

/// Milliseconds from "250ms", "1s", "2m" or a bare number of milliseconds.
std::int64_t parse_interval(const std::string& text) {
  std::size_t used = 0;
  const long long v = std::stoll(text, &used);
  const std::string unit = text.substr(used);
  if (unit.empty() || unit == "ms") return v;
  if (unit == "s") return v * 1000;
  if (unit == "m") return v * 60'000;
  throw Error(ErrorCode::InvalidArgument, "bad interval " + text);
}

void print_ingest(const IngestStats& st, const std::vector<std::string>& warnings) {
  std::cerr << "parsed " << st.parsed << ", state-only " << st.state_only << ", skipped "
            << st.skipped << ", nodes " << st.emitted_nodes << ", edges " << st.emitted_edges
            << "\n";
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

/// Reads `in` line by line; with `follow`, keeps polling for appended data
/// until interrupted.
void pump(std::istream& in, bool follow, LineIngestor& li, Service& svc) {
  std::string line;
  while (!g_interrupted) {
    if (std::getline(in, line)) {
      li.feed(line);
      continue;
    }
    if (!follow) break;
    in.clear();
    li.finish();
    svc.flush();
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  li.finish();
}

int cmd_ingest(const RootOptions& root, const IngestArgs& args) {
  Service svc(service_options(root));
  const auto opts = ingest_options(args);
  auto files = args.files;
  if (files.empty()) files.push_back("-");
  for (const auto& f : files) {
    svc.with_processor([&](EventProcessor& p) {
      LineIngestor li(opts, p, svc);
      if (f == "-") {
        pump(std::cin, args.follow, li, svc);
      } else {
        std::ifstream in(f);
        if (!in) throw Error(ErrorCode::IoError, "cannot open " + f);
        pump(in, args.follow, li, svc);
      }
      print_ingest(li.stats(), li.warnings());
      return 0;
    });
  }
  svc.flush();
  std::cout << svc.stats_json().dump(2) << "\n";
  return 0;
}

int cmd_export(const RootOptions& root, const std::string& dir) {
  Service svc(service_options(root));
  svc.flush();
  auto view = svc.store().read();
  auto rep = snapshot_two_table(*view, dir);
  std::cout << "wrote " << rep.vertex_rows << " vertices and " << rep.edge_rows << " edges to "
            << dir << "\n";
  return 0;
}

int cmd_import(const RootOptions& root, const std::string& dir) {
  if (root.store.empty()) throw Error(ErrorCode::InvalidArgument, "import needs --store");
  // Validate before copying.
  auto idx = load_two_table(dir, *parse_compression_level(root.compress));
  const fs::path base = fs::path(root.store) / "base";
  fs::create_directories(base);
  for (const char* name : {"vertices.tsv", "edges.tsv"}) {
    fs::copy_file(fs::path(dir) / name, base / name, fs::copy_options::overwrite_existing);
  }
  std::cout << "imported " << idx.node_count() << " nodes and " << idx.edge_count()
            << " edges into " << base.string() << "\n";
  return 0;
}

int cmd_serve(const RootOptions& root, const std::string& host, int port) {
  Service svc(service_options(root));
  svc.start();
  ApiServer api(svc);
  const int bound = api.bind(host, port);
  api.start();
  std::cerr << "graalf: serving on http://" << host << ":" << bound << "\n";
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  api.stop();
  svc.stop();
  return 0;
}

int cmd_console(const RootOptions& root) {
  Service svc(service_options(root));
  svc.start();
  {
    Console console(svc, std::cout, isatty(STDIN_FILENO) != 0);
    console.run(std::cin);
  }
  svc.stop();
  return 0;
}

int cmd_query(const RootOptions& root, const std::string& text) {
  Service svc(service_options(root));
  Session session("cli");
  auto outcome = svc.run(text, &session);
  if (auto* ack = std::get_if<std::string>(&outcome)) {
    std::cout << nlohmann::json{{"ack", *ack}}.dump() << "\n";
  } else {
    std::cout << result_to_json(std::get<QueryResult>(outcome)).dump(2) << "\n";
  }
  return 0;
}

int cmd_monitor_add(const RootOptions& root, const std::string& text,
                    const std::string& interval, const std::string& server,
                    const IngestArgs& args) {
  const auto ms = parse_interval(interval);
  if (!server.empty()) {
    httplib::Client cli(server);
    auto res = cli.Post("/api/monitors", nlohmann::json{{"text", text}, {"interval_ms", ms}}.dump(),
                        "application/json");
    if (!res) throw Error(ErrorCode::IoError, "cannot reach " + server);
    std::cout << res->body << "\n";
    return res->status == 200 ? 0 : 1;
  }
  // Local mode: watch the store while ingesting standard input.
  Service svc(service_options(root));
  auto spec = svc.monitors().register_monitor(text, ms);
  std::cerr << "monitor " << spec.id << " registered\n";
  auto sub = svc.events().subscribe();
  svc.start();
  std::atomic<bool> done{false};
  std::thread reader([&] {
    svc.ingest(std::cin, ingest_options(args));
    done = true;
  });
  auto printer = [&] {
    while (auto ev = sub->next(std::chrono::milliseconds(100))) {
      if (ev->find("\"notification\"") != std::string::npos) std::cout << *ev << std::endl;
    }
  };
  while (!g_interrupted && !done) printer();
  std::this_thread::sleep_for(std::chrono::milliseconds(ms * 2));
  printer();
  reader.join();
  svc.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"graalf: streaming provenance-graph forensics"};
  app.require_subcommand(1);
  RootOptions root;
  app.add_option("--store", root.store, "Store directory (journal and base snapshot)");
  app.add_option("--compress", root.compress, "Compression level c0..c3")
      ->check(CLI::IsMember({"c0", "c1", "c2", "c3"}));
  app.add_option("--memory-limit", root.memory_limit, "In-memory budget in bytes (0: unlimited)");
  app.add_option("--evict-threshold", root.evict_threshold, "Eviction trigger fraction")
      ->check(CLI::Range(0.0, 1.0));

  IngestArgs ingest;
  auto add_ingest_flags = [&](CLI::App* sc) {
    sc->add_option("--format", ingest.format, "audit | sysdig-json | sysdig-plain | csv");
    sc->add_option("--host", ingest.host, "Host the logs came from");
    sc->add_option("--header", ingest.header, "CSV header when the file has none");
    sc->add_option("--sysdig-format", ingest.sysdig_format, "Capture format of plain Sysdig");
  };

  auto* ingest_cmd = app.add_subcommand("ingest", "Ingest log files into the store");
  ingest_cmd->add_option("files", ingest.files, "Files to read ('-' for stdin)");
  ingest_cmd->add_flag("--follow", ingest.follow, "Keep reading appended data");
  add_ingest_flags(ingest_cmd);

  std::string dir;
  bool two_table = false;
  auto* export_cmd = app.add_subcommand("export", "Write a two-table snapshot");
  export_cmd->add_option("dir", dir, "Output directory")->required();
  export_cmd->add_flag("--two-table", two_table, "Vertex/edge table format")->required();

  auto* import_cmd = app.add_subcommand("import", "Install a two-table snapshot as the base");
  import_cmd->add_option("dir", dir, "Snapshot directory")->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--port", port, "TCP port (0 picks one)");
  serve_cmd->add_option("--bind", host, "Address to bind");

  auto* console_cmd = app.add_subcommand("console", "Interactive investigation console");

  std::string text;
  auto* query_cmd = app.add_subcommand("query", "Run one query and print JSON");
  query_cmd->add_option("text", text, "Query text")->required();

  auto* monitor_cmd = app.add_subcommand("monitor", "Monitoring queries");
  monitor_cmd->require_subcommand(1);
  std::string interval = "1s";
  std::string server;
  auto* monitor_add = monitor_cmd->add_subcommand("add", "Register a monitoring query");
  monitor_add->add_option("text", text, "Query text")->required();
  monitor_add->add_option("--interval", interval, "Polling interval (e.g. 1s, 500ms)");
  monitor_add->add_option("--server", server, "Register on a running server (http://host:port)");
  add_ingest_flags(monitor_add);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return cmd_ingest(root, ingest);
    if (*export_cmd) return cmd_export(root, dir);
    if (*import_cmd) return cmd_import(root, dir);
    if (*serve_cmd) return cmd_serve(root, host, port);
    if (*console_cmd) return cmd_console(root);
    if (*query_cmd) return cmd_query(root, text);
    if (*monitor_add) return cmd_monitor_add(root, text, interval, server, ingest);
  } catch (const std::exception& e) {
    std::cerr << "graalf: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
