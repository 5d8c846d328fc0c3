#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "graalf/console.hpp"
#include "graalf/export.hpp"
#include "graalf/server.hpp"
#include "graalf/service.hpp"

using namespace graalf;
using nlohmann::json;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

const char* kCsv =
    "ts,syscall,pid,comm,path\n"
    "1,read,10,tar,/tmp/in.tar\n"
    "2,write,10,tar,/tmp/out\n"
    "3,read,11,cat,/tmp/out\n";

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("graalf-svc-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

IngestStats ingest_csv(Service& svc, const std::string& text) {
  IngestOptions o;
  o.format = LogFormat::Csv;
  std::istringstream in(text);
  auto st = svc.ingest(in, o);
  svc.flush();
  return st;
}

}  // namespace

TEST_CASE("service runs queries and config commands") {
  Service svc;
  ingest_csv(svc, kCsv);
  auto s = svc.session(svc.create_session());
  auto out = svc.run("forward select * from * where name is /tmp/in.tar", s.get());
  auto& r = std::get<QueryResult>(out);
  CHECK(r.step == 1);
  // Forward from the tarball: tar's unit, /tmp/out, then cat's unit.
  bool reached_cat = false;
  for (const auto& [sig, n] : r.graph.nodes) {
    reached_cat |= sig.kind == NodeKind::ExecutionUnit && n.attrs.count("pid") &&
                   n.attrs.at("pid") == "11";
  }
  CHECK(reached_cat);

  CHECK(std::get<std::string>(svc.run("set mode verbose", s.get())) == "mode = verbose");
  CHECK(svc.engine_config().mode == RenderMode::Verbose);
  svc.run("limit depth 2", nullptr);
  CHECK(svc.engine_config().depth_limit == std::size_t{2});
  svc.run("set compression c2", nullptr);
  CHECK(svc.store().config().level == CompressionLevel::C2);
  CHECK_THROWS_AS(svc.session("nope"), Error);
  CHECK(svc.session_count() == 1);
  CHECK(svc.expire_sessions(std::chrono::steady_clock::now() + 2h) == 1);
}

TEST_CASE("a store directory survives a restart") {
  auto dir = fresh_dir("restart");
  {
    ServiceOptions o;
    o.store_dir = dir;
    Service svc(o);
    ingest_csv(svc, kCsv);
  }
  ServiceOptions o;
  o.store_dir = dir;
  Service again(o);
  CHECK(again.stats_json()["journal_rows"] == 3);
  auto r = again.engine().execute_text("select * from * where name is cat");
  CHECK(r.graph.nodes.size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("export colours nodes by step") {
  CHECK(step_color(1) == "red");
  CHECK(step_color(2) == "white");
  CHECK(step_color(6) == "red");
  Service svc;
  ingest_csv(svc, kCsv);
  Session s;
  svc.engine().execute_text("select * from * where name is /tmp/out", &s);
  svc.engine().execute_text("forward select * from * where name is /tmp/out", &s);
  auto dot = to_dot(s.graph());
  CHECK(dot.rfind("digraph graalf", 0) == 0);
  CHECK(dot.find("fillcolor=red") != std::string::npos);
  CHECK(dot.find("fillcolor=white") != std::string::npos);

  auto j = graph_to_json(s.graph());
  CHECK(graph_from_json(j) == s.graph());
  CHECK_THROWS_AS(graph_from_json(json{{"nodes", 3}}), Error);
}

TEST_CASE("console") {
  Service svc;
  ingest_csv(svc, kCsv);
  std::ostringstream out;
  {
    Console con(svc, out);
    std::istringstream in(
        "# comment\n"
        "select * from * where name is tar\n"
        "select * from *\n"
        "select from\n"
        "set mode verbose\n"
        "forward select * from * where name is /tmp/out\n"
        "quit\n"
        "select * from * where name is never-run\n");
    con.run(in);
    CHECK(con.session().steps() == 2);
  }
  const auto text = out.str();
  CHECK(text.find("[step 1]") != std::string::npos);
  CHECK(text.find("[step 2]") != std::string::npos);
  CHECK(text.find("error: ") != std::string::npos);
  CHECK(text.find("mode = verbose") != std::string::npos);
  CHECK(text.find("never-run") == std::string::npos);
}

TEST_CASE("http api") {
  CHECK(http_status(ErrorCode::NotFound) == 404);
  CHECK(http_status(ErrorCode::SyntaxError) == 400);
  CHECK(http_status(ErrorCode::BackendUnavailable) == 503);

  Service svc;
  svc.start();
  ApiServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  server.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(10, 0);

  auto ing = cli.Post("/api/ingest?format=csv", kCsv, "text/csv");
  REQUIRE(ing);
  CHECK(ing->status == 200);
  CHECK(json::parse(ing->body)["parsed"] == 3);

  auto sess = cli.Post("/api/sessions", "", "application/json");
  REQUIRE(sess);
  const auto id = json::parse(sess->body)["session_id"].get<std::string>();

  auto q = cli.Post("/api/sessions/" + id + "/query",
                    json{{"text", "back select * from * where name is /tmp/out"}}.dump(),
                    "application/json");
  REQUIRE(q);
  CHECK(q->status == 200);
  auto qj = json::parse(q->body);
  CHECK(qj["step"] == 1);
  CHECK(qj["graph"]["nodes"].size() > 1);

  auto bad = cli.Post("/api/sessions/" + id + "/query", json{{"text", "select from"}}.dump(),
                      "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"] == "SyntaxError");
  CHECK(json::parse(bad->body)["token"] == 2);

  auto empty = cli.Post("/api/sessions/" + id + "/query", json{{"text", "select * from *"}}.dump(),
                        "application/json");
  REQUIRE(empty);
  CHECK(empty->status == 400);
  CHECK(json::parse(empty->body)["error"] == "EmptyCriteria");

  auto missing = cli.Get("/api/sessions/zzz/graph");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto graph = cli.Get("/api/sessions/" + id + "/graph");
  REQUIRE(graph);
  CHECK(json::parse(graph->body)["nodes"].size() == qj["graph"]["nodes"].size());

  auto dot = cli.Get("/api/export/" + id + "?format=dot");
  REQUIRE(dot);
  CHECK(dot->body.rfind("digraph", 0) == 0);
  auto fmt = cli.Get("/api/export/" + id + "?format=png");
  REQUIRE(fmt);
  CHECK(fmt->status == 400);

  auto mon = cli.Post("/api/monitors",
                      json{{"text", "select write from * where file name has /tmp/new"},
                           {"interval_ms", 100}}.dump(),
                      "application/json");
  REQUIRE(mon);
  CHECK(mon->status == 200);
  auto mons = cli.Get("/api/monitors");
  REQUIRE(mons);
  CHECK(json::parse(mons->body).size() == 1);

  // Subscribe, then cause a matching write; the stream must carry the
  // notification.
  std::string seen;
  std::atomic<bool> got{false};
  std::thread reader([&] {
    httplib::Client sse("127.0.0.1", port);
    sse.set_read_timeout(10, 0);
    sse.Get("/api/events", [&](const char* data, std::size_t len) {
      seen.append(data, len);
      if (seen.find("\"notification\"") != std::string::npos) {
        got = true;
        return false;
      }
      return seen.size() < (1u << 20);
    });
  });
  while (svc.events().subscribers() == 0) std::this_thread::sleep_for(10ms);
  cli.Post("/api/ingest?format=csv", "ts,syscall,pid,comm,path\n9,write,12,sh,/tmp/new\n",
           "text/csv");
  reader.join();
  CHECK(got);
  CHECK(seen.find("/tmp/new") != std::string::npos);

  auto stats = cli.Get("/api/stats");
  REQUIRE(stats);
  CHECK(json::parse(stats->body)["sessions"] == 1);

  server.stop();
  svc.stop();
}
