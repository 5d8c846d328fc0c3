#include "doctest.h"

#include <filesystem>

#include "graalf/engine.hpp"
#include "synth.hpp"

using namespace graalf;
namespace fs = std::filesystem;

namespace {

EventEdge edge(std::vector<Timestamp> ts) {
  EventEdge e;
  e.src = {HostId(), NodeKind::File, "/f", 0};
  e.dst = {HostId(), NodeKind::ExecutionUnit, "u", 0};
  e.rel = Relation::syscall("read");
  e.timestamps = std::move(ts);
  e.count = static_cast<std::int64_t>(e.timestamps.size());
  return e;
}

EventRecord io(Timestamp ts, const char* sc, std::int64_t pid, const char* comm,
               const char* path) {
  EventRecord r;
  r.ts = ts;
  r.syscall = sc;
  r.pid = pid;
  r.comm = comm;
  r.resource = ResourceRef{NodeKind::File, path, std::nullopt};
  return r;
}

// E1 reads F1 at 5 and writes F3 at 6; E2 reads F2 at 2 and writes F1 at 9.
std::vector<EventRecord> e11_e22() {
  return {io(2, "read", 2, "e2", "/f2"), io(5, "read", 1, "e1", "/f1"),
          io(6, "write", 1, "e1", "/f3"), io(9, "write", 2, "e2", "/f1")};
}

std::set<std::string> titles(const ForensicGraph& g) {
  std::set<std::string> out;
  for (const auto& [sig, n] : g.nodes) out.insert(n.title);
  return out;
}

QueryResult run(const MemoryStore& store, const std::string& q, Session* s = nullptr,
                EngineConfig cfg = {}) {
  return QueryEngine(store).execute_text(q, s, cfg);
}

}  // namespace

TEST_CASE("temporal admission") {
  SUBCASE("C1 back keeps the latest timestamp not after the reference") {
    auto a = temporal_admit(edge({3, 7}), 5, TraceDirection::Back, CompressionLevel::C1);
    CHECK(a.admit);
    CHECK(a.next_ref == 3);
    CHECK_FALSE(temporal_admit(edge({6, 7}), 5, TraceDirection::Back, CompressionLevel::C1).admit);
  }
  SUBCASE("C1 forward keeps the earliest timestamp not before the reference") {
    auto a = temporal_admit(edge({3, 7}), 5, TraceDirection::Forward, CompressionLevel::C1);
    CHECK(a.admit);
    CHECK(a.next_ref == 7);
  }
  SUBCASE("C2 works on the interval") {
    CHECK_FALSE(temporal_admit(edge({9, 12}), 5, TraceDirection::Back, CompressionLevel::C2).admit);
    auto a = temporal_admit(edge({1, 10}), 5, TraceDirection::Back, CompressionLevel::C2);
    CHECK(a.admit);
    CHECK(a.next_ref == 5);
    auto f = temporal_admit(edge({1, 10}), 5, TraceDirection::Forward, CompressionLevel::C2);
    CHECK(f.admit);
    CHECK(f.next_ref == 5);
  }
  SUBCASE("C3 admits everything and drops the time bound") {
    auto a = temporal_admit(edge({9}), 5, TraceDirection::Back, CompressionLevel::C3);
    CHECK(a.admit);
    CHECK(a.next_ref == kTimeMax);
    CHECK(temporal_admit(edge({1}), 5, TraceDirection::Forward, CompressionLevel::C3).next_ref ==
          kTimeMin);
  }
  SUBCASE("hierarchy edges keep the reference") {
    auto h = edge({100});
    h.rel = Relation::spawn();
    auto a = temporal_admit(h, 5, TraceDirection::Back, CompressionLevel::C1);
    CHECK(a.admit);
    CHECK(a.next_ref == 5);
  }
}

TEST_CASE("criteria construction") {
  auto ast = std::get<QueryAst>(parse_query(
      "select * from file where name has /a and date is 2019-09-03 and date is 2019-09-03T10"));
  auto w = date_window(ast);
  REQUIRE(w);
  CHECK(w->begin == synth::kDay + 10 * 3'600'000'000LL);
  auto c = build_criteria(ast);
  REQUIRE(c);
  CHECK(c->kind == NodeKind::File);
  CHECK(c->titles.size() == 1);

  auto soc = std::get<QueryAst>(parse_query("select * from soc where file name is /x"));
  CHECK_FALSE(build_criteria(soc));
  auto disjoint = std::get<QueryAst>(
      parse_query("select * from * where date is 2019-09-03 and date is 2019-09-04"));
  CHECK_FALSE(build_criteria(disjoint));
  auto bad = std::get<QueryAst>(parse_query("select * from * where date is yesterday"));
  CHECK_THROWS_AS(build_criteria(bad), Error);
}

TEST_CASE("E1.1 and E2.2: interval compression over-approximates") {
  for (auto level : {CompressionLevel::C0, CompressionLevel::C1, CompressionLevel::C2,
                     CompressionLevel::C3}) {
    StoreConfig cfg;
    cfg.level = level;
    MemoryStore store(cfg);
    synth::load(store, e11_e22());
    auto r = run(store, "back select * from * where name is /f3");
    INFO(to_string(level));
    CHECK(titles(r.graph).count("/f1"));
    CHECK(titles(r.graph).count("e1"));
    const bool reaches_e2 = titles(r.graph).count("e2") > 0;
    CHECK(reaches_e2 == (level == CompressionLevel::C3));
  }
}

TEST_CASE("label-correcting traversal re-expands on a looser reference") {
  // Two routes into /mid: one via an early edge and one via a late edge.
  // Only the late route may continue to /src written at 8.
  std::vector<EventRecord> recs = {
      io(1, "write", 10, "a", "/mid"),   // a writes /mid early
      io(8, "write", 11, "b", "/src"),   // b writes /src
      io(9, "read", 10, "a", "/src"),    // a reads /src late
      io(10, "write", 10, "a", "/mid"),  // a writes /mid late
      io(12, "read", 12, "c", "/mid"),   // c reads /mid
      io(13, "write", 12, "c", "/out"),  // c writes /out
  };
  StoreConfig cfg;
  cfg.level = CompressionLevel::C0;
  MemoryStore store(cfg);
  synth::load(store, recs);
  auto r = run(store, "back select * from * where name is /out");
  CHECK(titles(r.graph).count("b"));
  auto oracle = synth::oracle_closure(synth::raw_log(recs),
                                      synth::nodes_titled(synth::raw_log(recs), "/out"),
                                      TraceDirection::Back, CompressionLevel::C0);
  std::set<SignatureKey> got;
  for (const auto& [sig, n] : r.graph.nodes) got.insert(sig);
  CHECK(got == oracle);
}

TEST_CASE("syscall filter and plain select") {
  MemoryStore store;
  synth::load(store, e11_e22());
  auto sel = run(store, "select * from file where name has /f");
  CHECK(titles(sel.graph) == std::set<std::string>{"/f1", "/f2", "/f3"});
  CHECK(sel.graph.edges.empty());

  auto fwd = run(store, "forward select read from * where name is /f2");
  CHECK(fwd.graph.nodes.size() == 2);
  CHECK_FALSE(titles(fwd.graph).count("/f1"));
  for (const auto& [k, e] : fwd.graph.edges) {
    if (!e.rel.is_hierarchy()) CHECK(e.rel.syscall_name() == "read");
  }

  auto date = run(store, "select * from * where name is /f1 and date is 1970-01-01");
  CHECK(titles(date.graph) == std::set<std::string>{"/f1"});
  auto later = run(store, "select * from * where name is /f1 and date is 2019");
  CHECK(later.graph.empty());

  auto depth = run(store, "forward select * from * where name is /f2", nullptr,
                   EngineConfig{std::size_t{1}, RenderMode::Normal});
  CHECK_FALSE(titles(depth.graph).count("/f1"));
  CHECK_THROWS_AS(run(store, "select * from *"), Error);
  CHECK_THROWS_AS(run(store, "set mode verbose"), Error);
}

TEST_CASE("sessions number steps and keep the earliest") {
  MemoryStore store;
  synth::load(store, e11_e22());
  Session s("s1");
  auto r1 = run(store, "select * from * where name is /f1", &s);
  CHECK(r1.step == 1);
  auto r2 = run(store, "forward select * from * where name is /f2", &s);
  CHECK(r2.step == 2);
  auto g = s.graph();
  CHECK(s.steps() == 2);
  for (const auto& [sig, n] : g.nodes) {
    CHECK(g.step_of.at(sig) == (n.title == "/f1" ? 1 : 2));
  }
  CHECK(r2.graph.step_of.at(r1.graph.nodes.begin()->first) == 1);
}

TEST_CASE("rendering modes") {
  StoreConfig cfg;
  cfg.level = CompressionLevel::C1;
  MemoryStore store(cfg);
  std::vector<EventRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(io(i, "write", 1, "cat", "/x"));
  synth::load(store, recs);
  auto g = run(store, "back select * from * where name is /x").graph;

  auto verbose = render_graph(g, RenderMode::Verbose);
  std::size_t writes = 0;
  for (const auto& e : verbose.edges) writes += e.rel == Relation::syscall("write");
  CHECK(writes == 3);

  auto normal = render_graph(g, RenderMode::Normal);
  for (const auto& n : normal.nodes) CHECK_FALSE(n.kind == NodeKind::Thread);
  REQUIRE(normal.edges.size() == 1);
  CHECK(normal.edges[0].count == 3);
  CHECK(normal.edges[0].label == "write ×3");
  CHECK(normal.edges[0].src.kind == NodeKind::Process);
}

namespace {

class FailingBackend : public BackendInterface {
 public:
  void append(const EventRecord&) override {}
  void flush() override {}
  std::vector<ProvNode> select(const NodeCriteria&) override {
    throw Error(ErrorCode::BackendUnavailable, "down");
  }
  std::vector<LineGraph> expand(const SigSet&, TraceDirection, const std::optional<std::string>&,
                                ExpandSeen&) override {
    throw Error(ErrorCode::BackendUnavailable, "down");
  }
  std::vector<EventRecord> scan_range(const TimeWindow&) override { return {}; }
  BackendStats stats() const override { return {}; }
};

}  // namespace

TEST_CASE("journal-backed traversal matches memory after eviction") {
  auto dir = fs::temp_directory_path() / ("graalf-engine-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  auto records = synth::random_stream(11, 200, 1500);
  JournalBackend journal(dir);
  MemoryStore full;
  StoreConfig small;
  small.memory_limit_bytes = 30'000;
  MemoryStore evicting(small);
  {
    EventProcessor proc;
    for (const auto& r : records) {
      auto out = proc.process(r);
      if (out.kind == EventProcessor::Kind::Skipped) continue;
      journal.append(r);
      if (out.graph) {
        full.insert(*out.graph);
        evicting.insert(*out.graph);
      }
    }
  }
  journal.flush();
  REQUIRE(evicting.evicted_total() > 0);

  QueryEngine mem(full);
  QueryEngine hybrid(evicting, &journal);
  for (const char* q : {"back select * from * where name has /r/f1", "forward select * from * where name is p0",
                        "back select write from * where name has 10.0.0."}) {
    INFO(q);
    auto a = mem.execute_text(q);
    auto b = hybrid.execute_text(q);
    CHECK(b.stats.backend_calls > 0);
    CHECK(a.graph.nodes.size() == b.graph.nodes.size());
    CHECK(a.graph.edges == b.graph.edges);
  }

  FailingBackend down;
  QueryEngine degraded(evicting, &down);
  auto r = degraded.execute_text("back select * from * where name has /r/f1");
  CHECK(r.stats.degraded);
  CHECK_FALSE(r.stats.warning.empty());
  fs::remove_all(dir);
}
