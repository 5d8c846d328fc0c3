#include "graalf/backend.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

namespace graalf {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "#graalf-v1";

std::string opt_int(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : std::string();
}

std::optional<std::int64_t> parse_opt_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw Error(ErrorCode::MalformedRecord, "not an integer: '" + s + "'");
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string header_line(const std::vector<std::string>& cols) {
  std::string h(kMagic);
  for (const auto& c : cols) h += "\t" + c;
  return h;
}

void expect_header(std::string_view line, const std::vector<std::string>& cols,
                   const fs::path& file) {
  while (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line != header_line(cols)) {
    throw Error(ErrorCode::IoError, "unexpected header in " + file.string());
  }
}

}  // namespace

std::string tsv_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string tsv_unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(s[i]);
    }
  }
  return out;
}

namespace {

std::string attr_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '=' || c == ';' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

std::string encode_attrs(const Attrs& attrs) {
  std::string out;
  for (const auto& [k, v] : attrs) {
    if (!out.empty()) out.push_back(';');
    out += attr_escape(k);
    out.push_back('=');
    out += attr_escape(v);
  }
  return out;
}

Attrs decode_attrs(std::string_view s) {
  Attrs out;
  std::string key, cur;
  bool in_value = false;
  auto finish = [&] {
    if (!in_value) {
      if (!cur.empty()) throw Error(ErrorCode::MalformedRecord, "attr without '='");
      return;
    }
    out[key] = cur;
    key.clear();
    cur.clear();
    in_value = false;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\' && i + 1 < s.size()) {
      cur.push_back(s[++i]);
    } else if (c == '=' && !in_value) {
      key = std::move(cur);
      cur.clear();
      in_value = true;
    } else if (c == ';') {
      finish();
    } else {
      cur.push_back(c);
    }
  }
  finish();
  return out;
}

// ---------------------------------------------------------------------------
// Journal rows

const std::vector<std::string>& journal_columns() {
  static const std::vector<std::string> cols = {
      "host",   "ts",      "syscall",  "pid",     "pname",    "ppid",
      "ppname", "ancestor_pid", "ancestor_name", "tid", "unit_id", "fd_kind",
      "fd_title", "fd_inode", "args", "retval"};
  return cols;
}

FlatJournalRow to_row(const EventRecord& rec) {
  FlatJournalRow row;
  row.host = rec.host.str();
  row.ts = rec.ts;
  row.syscall = rec.syscall;
  row.pid = opt_int(rec.pid);
  row.pname = rec.comm;
  row.ppid = opt_int(rec.ppid);
  row.ppname = rec.pcomm;
  row.ancestor_pid = opt_int(rec.ancestor_pid);
  row.ancestor_name = rec.ancestor_name;
  row.tid = opt_int(rec.tid);
  row.unit_id = rec.unit_id.value_or("");
  if (rec.resource) {
    row.fd_kind = std::string(to_string(rec.resource->kind));
    row.fd_title = rec.resource->path_or_endpoint;
    row.fd_inode = rec.resource->inode.value_or("");
  }
  row.args = rec.args.value_or("");
  row.retval = rec.retval.value_or("");
  return row;
}

EventRecord from_row(const FlatJournalRow& row) {
  EventRecord rec;
  rec.host = HostId(row.host);
  rec.ts = row.ts;
  rec.syscall = row.syscall;
  rec.pid = parse_opt_int(row.pid);
  rec.comm = row.pname;
  rec.ppid = parse_opt_int(row.ppid);
  rec.pcomm = row.ppname;
  rec.ancestor_pid = parse_opt_int(row.ancestor_pid);
  rec.ancestor_name = row.ancestor_name;
  rec.tid = parse_opt_int(row.tid);
  if (!row.unit_id.empty()) rec.unit_id = row.unit_id;
  if (!row.fd_kind.empty()) {
    auto kind = parse_node_kind(row.fd_kind);
    if (!kind) throw Error(ErrorCode::MalformedRecord, "bad fd_kind " + row.fd_kind);
    ResourceRef ref{*kind, row.fd_title, std::nullopt};
    if (!row.fd_inode.empty()) ref.inode = row.fd_inode;
    rec.resource = std::move(ref);
  }
  if (!row.args.empty()) rec.args = row.args;
  if (!row.retval.empty()) rec.retval = row.retval;
  return rec;
}

std::string encode_row(const FlatJournalRow& r) {
  std::string out;
  const std::string_view cells[] = {
      r.host, "", r.syscall, r.pid, r.pname, r.ppid, r.ppname, r.ancestor_pid,
      r.ancestor_name, r.tid, r.unit_id, r.fd_kind, r.fd_title, r.fd_inode, r.args,
      r.retval};
  for (std::size_t i = 0; i < std::size(cells); ++i) {
    if (i) out.push_back('\t');
    out += i == 1 ? std::to_string(r.ts) : tsv_escape(cells[i]);
  }
  return out;
}

FlatJournalRow decode_row(std::string_view line) {
  while (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto cells = split_tabs(line);
  if (cells.size() != journal_columns().size()) {
    throw Error(ErrorCode::MalformedRecord, "journal row has " +
                                                std::to_string(cells.size()) + " cells");
  }
  FlatJournalRow r;
  std::string* fields[] = {&r.host,    nullptr,    &r.syscall,      &r.pid,
                           &r.pname,   &r.ppid,    &r.ppname,       &r.ancestor_pid,
                           &r.ancestor_name, &r.tid, &r.unit_id,    &r.fd_kind,
                           &r.fd_title, &r.fd_inode, &r.args,       &r.retval};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (fields[i]) *fields[i] = tsv_unescape(cells[i]);
  }
  auto ts = parse_opt_int(std::string(cells[1]));
  if (!ts || r.syscall.empty() || r.host.empty()) {
    throw Error(ErrorCode::MalformedRecord, "journal row missing host, ts or syscall");
  }
  r.ts = *ts;
  return r;
}

// ---------------------------------------------------------------------------
// Journal backend

JournalBackend::JournalBackend(fs::path dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  file_ = dir / "journal.tsv";
  const bool exists = fs::exists(file_) && fs::file_size(file_) > 0;
  if (exists) {
    std::ifstream in(file_);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + file_.string());
    std::string line;
    std::getline(in, line);
    expect_header(line, journal_columns(), file_);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      rows_.push_back(decode_row(line));
    }
  }
  out_.open(file_, std::ios::app);
  if (!out_) throw Error(ErrorCode::IoError, "cannot open " + file_.string());
  if (!exists) out_ << header_line(journal_columns()) << '\n' << std::flush;
}

void JournalBackend::append(const EventRecord& rec) {
  std::lock_guard<std::mutex> lock(pending_mu_);
  pending_.push_back(to_row(rec));
  out_ << encode_row(pending_.back()) << '\n';
  if (!out_) throw Error(ErrorCode::IoError, "write failed on " + file_.string());
  ++appended_;
}

void JournalBackend::flush() {
  std::unique_lock<std::shared_mutex> w(mu_);
  std::lock_guard<std::mutex> lock(pending_mu_);
  out_.flush();
  if (!out_) throw Error(ErrorCode::IoError, "flush failed on " + file_.string());
  rows_.insert(rows_.end(), std::make_move_iterator(pending_.begin()),
               std::make_move_iterator(pending_.end()));
  pending_.clear();
}

template <typename Fn>
void JournalBackend::replay(Fn&& fn) const {
  ++scans_;
  EventProcessor processor;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    EventRecord rec = from_row(rows_[i]);
    EventProcessor::Result r;
    try {
      r = processor.process(rec);
    } catch (const Error&) {
      continue;
    }
    fn(static_cast<std::uint64_t>(i), rec, r.graph ? &*r.graph : nullptr);
  }
}

namespace {

bool node_matches(const ProvNode& n, const NodeCriteria& c) {
  if (c.kind && n.sig.kind != *c.kind) return false;
  for (const auto& t : c.titles) {
    if (!t.matches(n.title)) return false;
  }
  for (const auto& a : c.attrs) {
    auto it = n.attrs.find(a.key);
    if (it == n.attrs.end() || !a.pred.matches(it->second)) return false;
  }
  return true;
}

}  // namespace

std::vector<ProvNode> JournalBackend::select(const NodeCriteria& criteria) {
  if (criteria.empty()) {
    throw Error(ErrorCode::EmptyCriteria, "backend select needs at least one criterion");
  }
  std::shared_lock<std::shared_mutex> r(mu_);
  std::map<SignatureKey, ProvNode> found;
  replay([&](std::uint64_t, const EventRecord&, const LineGraph* lg) {
    if (!lg) return;
    for (const auto& n : lg->nodes) {
      if (node_matches(n, criteria)) found.emplace(n.sig, n);
    }
  });
  std::vector<ProvNode> out;
  out.reserve(found.size());
  for (auto& [sig, n] : found) out.push_back(std::move(n));
  return out;
}

std::vector<LineGraph> JournalBackend::expand(const SigSet& frontier, TraceDirection dir,
                                              const std::optional<std::string>& syscall,
                                              ExpandSeen& seen) {
  std::vector<LineGraph> out;
  if (frontier.empty()) return out;
  std::shared_lock<std::shared_mutex> r(mu_);
  replay([&](std::uint64_t offset, const EventRecord&, const LineGraph* lg) {
    if (!lg || seen.count(offset)) return;
    for (const auto& e : lg->edges) {
      if (syscall && !e.rel.is_hierarchy() && e.rel.syscall_name() != *syscall) continue;
      const bool into = frontier.count(e.dst) != 0;
      const bool from = frontier.count(e.src) != 0;
      const bool hit = dir == TraceDirection::Back      ? into
                       : dir == TraceDirection::Forward ? from
                                                        : (into || from);
      if (hit) {
        seen.insert(offset);
        out.push_back(*lg);
        return;
      }
    }
  });
  return out;
}

std::vector<EventRecord> JournalBackend::scan_range(const TimeWindow& window) {
  std::shared_lock<std::shared_mutex> r(mu_);
  ++scans_;
  std::vector<EventRecord> out;
  for (const auto& row : rows_) {
    if (window.contains(row.ts)) out.push_back(from_row(row));
  }
  return out;
}

BackendStats JournalBackend::stats() const {
  std::shared_lock<std::shared_mutex> r(mu_);
  return {rows_.size(), scans_, appended_};
}

// ---------------------------------------------------------------------------
// Two-table snapshot

namespace {

const std::vector<std::string>& vertex_columns() {
  static const std::vector<std::string> cols = {"host",  "kind",  "local_id",
                                                "epoch", "title", "attrs"};
  return cols;
}

const std::vector<std::string>& edge_columns() {
  static const std::vector<std::string> cols = {
      "src_host", "src_kind", "src_id", "src_epoch", "dst_host", "dst_kind",
      "dst_id",   "dst_epoch", "rel",   "count",     "timestamps", "attrs"};
  return cols;
}

std::string sig_cells(const SignatureKey& s) {
  return tsv_escape(s.host.str()) + "\t" + std::string(to_string(s.kind)) + "\t" +
         tsv_escape(s.local_id) + "\t" + std::to_string(s.epoch);
}

SignatureKey parse_sig(const std::vector<std::string_view>& cells, std::size_t at) {
  auto kind = parse_node_kind(cells[at + 1]);
  auto epoch = parse_opt_int(std::string(cells[at + 3]));
  if (!kind || !epoch) throw Error(ErrorCode::MalformedRecord, "bad signature cells");
  return SignatureKey{HostId(tsv_unescape(cells[at])), *kind, tsv_unescape(cells[at + 2]),
                      *epoch};
}

}  // namespace

SnapshotReport snapshot_two_table(const GraphIndex& index, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<const ProvNode*> nodes;
  index.for_each_node([&](const ProvNode& n) { nodes.push_back(&n); });
  std::sort(nodes.begin(), nodes.end(),
            [](const ProvNode* a, const ProvNode* b) { return a->sig < b->sig; });

  // Parallel C0 edges keep their stored order; only keys are sorted.
  std::map<std::pair<SignatureKey, SignatureKey>, const std::vector<EventEdge>*> pairs;
  index.for_each_node([&](const ProvNode& n) {
    for (const auto& dst : index.out_neighbors(n.sig)) {
      pairs.emplace(std::make_pair(n.sig, dst), index.edges_between(n.sig, dst));
    }
  });

  SnapshotReport report;
  std::ofstream v(dir / "vertices.tsv", std::ios::trunc | std::ios::binary);
  std::ofstream e(dir / "edges.tsv", std::ios::trunc | std::ios::binary);
  if (!v || !e) throw Error(ErrorCode::IoError, "cannot write snapshot in " + dir.string());
  v << header_line(vertex_columns()) << '\n';
  for (const ProvNode* n : nodes) {
    v << sig_cells(n->sig) << '\t' << tsv_escape(n->title) << '\t'
      << tsv_escape(encode_attrs(n->attrs)) << '\n';
    ++report.vertex_rows;
  }
  e << header_line(edge_columns()) << '\n';
  for (const auto& [pair, list] : pairs) {
    std::vector<const EventEdge*> ordered;
    for (const auto& edge : *list) ordered.push_back(&edge);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const EventEdge* a, const EventEdge* b) { return a->rel < b->rel; });
    for (const EventEdge* edge : ordered) {
      std::string ts;
      for (std::size_t i = 0; i < edge->timestamps.size(); ++i) {
        if (i) ts.push_back(',');
        ts += std::to_string(edge->timestamps[i]);
      }
      e << sig_cells(edge->src) << '\t' << sig_cells(edge->dst) << '\t'
        << tsv_escape(to_string(edge->rel)) << '\t' << edge->count << '\t' << ts << '\t'
        << tsv_escape(encode_attrs(edge->attrs)) << '\n';
      ++report.edge_rows;
    }
  }
  v.flush();
  e.flush();
  if (!v || !e) throw Error(ErrorCode::IoError, "write failed in " + dir.string());
  return report;
}

GraphIndex load_two_table(const fs::path& dir, CompressionLevel level) {
  GraphIndex index(level);
  std::ifstream v(dir / "vertices.tsv", std::ios::binary);
  std::ifstream e(dir / "edges.tsv", std::ios::binary);
  if (!v || !e) throw Error(ErrorCode::IoError, "missing snapshot tables in " + dir.string());
  std::string line;
  std::getline(v, line);
  expect_header(line, vertex_columns(), dir / "vertices.tsv");
  while (std::getline(v, line)) {
    if (line.empty()) continue;
    auto cells = split_tabs(line);
    if (cells.size() != vertex_columns().size()) {
      throw Error(ErrorCode::MalformedRecord, "vertex row with wrong cell count");
    }
    ProvNode n{parse_sig(cells, 0), tsv_unescape(cells[4]),
               decode_attrs(tsv_unescape(cells[5]))};
    index.upsert_node(n);
  }
  std::getline(e, line);
  expect_header(line, edge_columns(), dir / "edges.tsv");
  while (std::getline(e, line)) {
    if (line.empty()) continue;
    auto cells = split_tabs(line);
    if (cells.size() != edge_columns().size()) {
      throw Error(ErrorCode::MalformedRecord, "edge row with wrong cell count");
    }
    EventEdge edge;
    edge.src = parse_sig(cells, 0);
    edge.dst = parse_sig(cells, 4);
    if (!index.contains(edge.src) || !index.contains(edge.dst)) {
      throw Error(ErrorCode::MalformedRecord, "edge references a missing vertex");
    }
    edge.rel = Relation::parse(tsv_unescape(cells[8]));
    auto count = parse_opt_int(std::string(cells[9]));
    if (!count || *count < 1) throw Error(ErrorCode::MalformedRecord, "bad edge count");
    edge.count = *count;
    std::string_view ts = cells[10];
    while (!ts.empty()) {
      auto comma = ts.find(',');
      auto t = parse_opt_int(std::string(ts.substr(0, comma)));
      if (!t) throw Error(ErrorCode::MalformedRecord, "empty timestamp");
      edge.timestamps.push_back(*t);
      if (comma == std::string_view::npos) break;
      ts.remove_prefix(comma + 1);
    }
    if (edge.timestamps.empty()) throw Error(ErrorCode::MalformedRecord, "edge without timestamps");
    edge.attrs = decode_attrs(tsv_unescape(cells[11]));
    index.add_edge_raw(edge);
  }
  return index;
}

}  // namespace graalf
