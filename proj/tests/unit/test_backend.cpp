#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "graalf/backend.hpp"
#include "synth.hpp"

using namespace graalf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("graalf-test-" + name + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

EventRecord rec(Timestamp ts, const char* sc, std::int64_t pid, const char* path) {
  EventRecord r;
  r.ts = ts;
  r.syscall = sc;
  r.pid = pid;
  r.comm = "p" + std::to_string(pid);
  r.resource = ResourceRef{NodeKind::File, path, std::nullopt};
  return r;
}

}  // namespace

TEST_CASE("escaping round trips") {
  const std::string nasty = "a\tb\nc\\d\re";
  CHECK(tsv_escape(nasty).find('\t') == std::string::npos);
  CHECK(tsv_unescape(tsv_escape(nasty)) == nasty);
  Attrs a{{"k=1", "v;2"}, {"x", "\\"}};
  CHECK(decode_attrs(encode_attrs(a)) == a);
  CHECK(decode_attrs("").empty());
}

TEST_CASE("journal rows round trip") {
  EventRecord r = rec(12, "write", 7, "/tmp/with\ttab");
  r.ppid = 1;
  r.tid = 8;
  r.unit_id = "2";
  r.args = "x y";
  r.retval = "-1";
  r.resource->inode = "99";
  auto row = to_row(r);
  CHECK(decode_row(encode_row(row)) == row);
  CHECK(from_row(row) == r);
  CHECK_THROWS_AS(decode_row("only\ttwo"), Error);
}

TEST_CASE("journal persists, selects and expands") {
  TempDir dir("journal");
  {
    JournalBackend j(dir.path);
    j.append(rec(1, "write", 10, "/a"));
    j.append(rec(2, "read", 11, "/a"));
    j.append(rec(3, "write", 11, "/b"));
    CHECK(j.stats().rows == 0);
    j.flush();
    CHECK(j.stats().rows == 3);
  }
  JournalBackend j(dir.path);
  CHECK(j.stats().rows == 3);
  CHECK(j.scan_range(TimeWindow{2, 3}).size() == 2);

  NodeCriteria c;
  c.titles.emplace_back(MatchOp::Is, "/a");
  auto nodes = j.select(c);
  REQUIRE(nodes.size() == 1);
  CHECK_THROWS_AS(j.select(NodeCriteria{}), Error);

  ExpandSeen seen;
  SigSet frontier{nodes[0].sig};
  auto back = j.expand(frontier, TraceDirection::Back, std::nullopt, seen);
  REQUIRE(back.size() == 1);
  CHECK(back[0].edges.back().rel == Relation::syscall("write"));
  auto fwd = j.expand(frontier, TraceDirection::Forward, std::nullopt, seen);
  REQUIRE(fwd.size() == 1);
  CHECK(fwd[0].edges.back().rel == Relation::syscall("read"));
  // Already delivered rows are suppressed.
  CHECK(j.expand(frontier, TraceDirection::Both, std::nullopt, seen).empty());
  ExpandSeen fresh;
  CHECK(j.expand(frontier, TraceDirection::Back, std::string("read"), fresh).empty());
}

TEST_CASE("a journal with a foreign header is rejected") {
  TempDir dir("header");
  std::ofstream(dir.path / "journal.tsv") << "#something-else\n";
  CHECK_THROWS_AS(JournalBackend(dir.path), Error);
}

TEST_CASE("two-table snapshots are stable") {
  for (auto level : {CompressionLevel::C0, CompressionLevel::C1, CompressionLevel::C2,
                     CompressionLevel::C3}) {
    StoreConfig cfg;
    cfg.level = level;
    MemoryStore store(cfg);
    synth::load(store, synth::random_stream(7, 200, 500));
    TempDir a("snap-a"), b("snap-b");
    {
      auto view = store.read();
      auto rep = snapshot_two_table(*view, a.path);
      CHECK(rep.vertex_rows == view->node_count());
    }
    auto restored = load_two_table(a.path, level);
    CHECK(restored.audit().empty());
    snapshot_two_table(restored, b.path);
    CHECK(slurp(a.path / "vertices.tsv") == slurp(b.path / "vertices.tsv"));
    CHECK(slurp(a.path / "edges.tsv") == slurp(b.path / "edges.tsv"));
    CHECK(restored.to_graph() == store.read()->to_graph());
  }
}
