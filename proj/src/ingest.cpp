#include "graalf/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <istream>

#include "json.hpp"

#include "graalf/syscalls.hpp"

namespace graalf {

namespace {

template <typename T>
std::optional<T> to_int(std::string_view s, int base = 10) {
  T out{};
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return out;
}

std::string basename_of(std::string_view path) {
  auto pos = path.find_last_of('/');
  return std::string(pos == std::string_view::npos ? path : path.substr(pos + 1));
}

bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

// ---------------------------------------------------------------------------
// Resources

ProvNode resource_node(const HostId& host, const ResourceRef& ref) {
  ProvNode node;
  node.title = ref.path_or_endpoint;
  switch (ref.kind) {
    case NodeKind::Socket: {
      node.attrs["endpoint"] = ref.path_or_endpoint;
      auto colon = ref.path_or_endpoint.rfind(':');
      if (colon != std::string::npos && colon > 0) {
        node.attrs["addr"] = ref.path_or_endpoint.substr(0, colon);
        node.attrs["port"] = ref.path_or_endpoint.substr(colon + 1);
      }
      node.sig = SignatureKey{host, NodeKind::Socket, ref.path_or_endpoint, 0};
      break;
    }
    case NodeKind::Pipe:
      node.attrs["pipe"] = ref.path_or_endpoint;
      node.sig = node_signature(NodeKind::Pipe, host, node.attrs);
      break;
    default:
      node.attrs["path"] = ref.path_or_endpoint;
      if (ref.inode) node.attrs["inode"] = *ref.inode;
      node.sig = node_signature(NodeKind::File, host, node.attrs);
      break;
  }
  return node;
}

std::optional<ResourceRef> infer_resource(std::string_view name, std::string_view kind) {
  if (name.empty()) return std::nullopt;
  auto socket = [](std::string_view ep) {
    return ResourceRef{NodeKind::Socket, std::string(ep), std::nullopt};
  };
  if (auto arrow = name.find("->"); arrow != std::string_view::npos) {
    return socket(name.substr(arrow + 2));
  }
  if (kind == "ipv4" || kind == "ipv6" || kind == "4" || kind == "6" ||
      kind == "unix" || kind == "u" || kind == "socket" || kind == "s") {
    return socket(name);
  }
  if (kind == "pipe" || kind == "p" || name.rfind("pipe:", 0) == 0) {
    return ResourceRef{NodeKind::Pipe, std::string(name), std::nullopt};
  }
  if (name.front() == '/' || kind == "file" || kind == "f" || kind == "directory" ||
      kind == "d") {
    return ResourceRef{NodeKind::File, std::string(name), std::nullopt};
  }
  if (auto colon = name.rfind(':');
      colon != std::string_view::npos && colon > 0 && is_digits(name.substr(colon + 1))) {
    return socket(name);
  }
  return ResourceRef{NodeKind::File, std::string(name), std::nullopt};
}

// ---------------------------------------------------------------------------
// Line graphs

void HostState::forget_process(std::int64_t pid) {
  for (auto it = fd_table.lower_bound({pid, std::numeric_limits<int>::min()});
       it != fd_table.end() && it->first.first == pid;) {
    it = fd_table.erase(it);
  }
  for (auto it = subjects.begin(); it != subjects.end();) {
    if (it->second.first == pid) {
      const auto& attrs = it->second.second.attrs;
      if (auto tid = attrs.find("tid"); tid != attrs.end()) {
        if (auto t = to_int<std::int64_t>(tid->second)) unit_table.erase(*t);
      }
      it = subjects.erase(it);
    } else {
      ++it;
    }
  }
  unit_table.erase(pid);
  proc_table.erase(pid);
}

namespace {

std::string process_title(const EventRecord& rec, std::int64_t pid) {
  if (!rec.comm.empty()) return rec.comm;
  if (!rec.exe.empty()) return basename_of(rec.exe);
  return "[" + std::to_string(pid) + "]";
}

ProcessEntry& touch_process(const EventRecord& rec, HostState& st) {
  const auto pid = *rec.pid;
  auto it = st.proc_table.find(pid);
  if (it != st.proc_table.end()) return it->second;

  ProcessEntry entry;
  Timestamp epoch = rec.ts;
  if (auto pc = st.pending_children.find(pid); pc != st.pending_children.end()) {
    epoch = pc->second;
    st.pending_children.erase(pc);
  }
  entry.node.title = process_title(rec, pid);
  entry.node.attrs["pid"] = std::to_string(pid);
  if (rec.ppid) entry.node.attrs["ppid"] = std::to_string(*rec.ppid);
  entry.node.attrs["first_seen"] = std::to_string(epoch);
  entry.node.sig = node_signature(NodeKind::Process, st.host, entry.node.attrs);
  entry.node.attrs.erase("first_seen");
  return st.proc_table.emplace(pid, std::move(entry)).first->second;
}

ProcessEntry& touch_parent(const EventRecord& rec, HostState& st) {
  const auto ppid = *rec.ppid;
  auto it = st.proc_table.find(ppid);
  if (it != st.proc_table.end()) return it->second;
  ProcessEntry entry;
  entry.node.title = rec.pcomm.empty() ? "[" + std::to_string(ppid) + "]" : rec.pcomm;
  entry.node.attrs["pid"] = std::to_string(ppid);
  if (rec.ancestor_pid) entry.node.attrs["ppid"] = std::to_string(*rec.ancestor_pid);
  entry.node.sig = SignatureKey{st.host, NodeKind::Process, std::to_string(ppid), rec.ts};
  return st.proc_table.emplace(ppid, std::move(entry)).first->second;
}

const ProvNode& touch_subject(HostState& st, std::int64_t pid, NodeKind kind,
                              const std::string& local_id, Timestamp ts,
                              const Attrs& attrs) {
  auto it = st.subjects.find(local_id);
  if (it == st.subjects.end() || it->second.second.sig.kind != kind) {
    ProvNode node{SignatureKey{st.host, kind, local_id, ts}, local_id, attrs};
    it = st.subjects.insert_or_assign(local_id, std::make_pair(pid, std::move(node))).first;
  }
  return it->second.second;
}

EventEdge hierarchy_edge(const ProvNode& parent, const ProvNode& child, Relation rel) {
  EventEdge e;
  e.src = parent.sig;
  e.dst = child.sig;
  e.rel = std::move(rel);
  e.timestamps = {child.sig.epoch};
  return e;
}

void apply_lifecycle(const EventRecord& rec, HostState& st) {
  const auto pid = *rec.pid;
  const auto& name = rec.syscall;
  if (name == "exit" || name == "exit_group" || name == "procexit") {
    st.forget_process(pid);
    return;
  }
  auto& self = touch_process(rec, st);
  if (name == "execve") {
    if (!self.emitted) {
      self.node.title = process_title(rec, pid);
    }
    return;
  }
  // fork / clone / vfork: the child's epoch is its creation time.
  if (!rec.retval) return;
  auto child = to_int<std::int64_t>(*rec.retval);
  if (!child || *child <= 0 || *child == pid) return;
  if (!st.proc_table.count(*child)) st.pending_children[*child] = rec.ts;
}

}  // namespace

LineGraph build_line_graph(const EventRecord& rec, HostState& st) {
  if (!rec.pid && !rec.resource) {
    throw Error(ErrorCode::EmptyRecord, "record has neither pid nor resource");
  }
  LineGraph lg;
  if (!rec.pid) {
    lg.nodes.push_back(resource_node(st.host, *rec.resource));
    return lg;
  }
  if (syscall_role(rec.syscall) == SyscallRole::Lifecycle) {
    apply_lifecycle(rec, st);
    return lg;
  }
  const auto pid = *rec.pid;
  const std::string pid_s = std::to_string(pid);

  auto& proc = touch_process(rec, st);
  const bool first = !proc.emitted;
  proc.emitted = true;
  std::optional<ProvNode> parent;
  if (first && proc.node.attrs.count("ppid") && rec.ppid) {
    auto& pe = touch_parent(rec, st);
    pe.emitted = true;
    parent = pe.node;
    lg.nodes.push_back(*parent);
  }
  // touch_parent may rehash proc_table; copy the process node afterwards.
  const ProvNode proc_node = st.proc_table.at(pid).node;
  lg.nodes.push_back(proc_node);
  if (parent) lg.edges.push_back(hierarchy_edge(*parent, proc_node, Relation::spawn()));

  std::string tid_local;
  Attrs thread_attrs{{"pid", pid_s}};
  if (rec.tid) {
    tid_local = std::to_string(*rec.tid);
    thread_attrs["tid"] = tid_local;
  } else {
    tid_local = pid_s + ".t0";
    thread_attrs["synthetic"] = "true";
  }
  const ProvNode thread =
      touch_subject(st, pid, NodeKind::Thread, tid_local, rec.ts, thread_attrs);
  lg.nodes.push_back(thread);
  lg.edges.push_back(hierarchy_edge(proc_node, thread, Relation::spawn()));

  std::string unit = rec.unit_id.value_or("");
  if (unit.empty() && rec.tid) {
    if (auto ut = st.unit_table.find(*rec.tid); ut != st.unit_table.end()) unit = ut->second.current;
  }
  Attrs unit_attrs{{"pid", pid_s}};
  if (rec.tid) unit_attrs["tid"] = tid_local;
  std::string unit_local;
  if (unit.empty()) {
    unit_local = tid_local + ".u0";
    unit_attrs["synthetic"] = "true";
  } else {
    unit_local = tid_local + ".unit" + unit;
    unit_attrs["unit"] = unit;
  }
  const ProvNode unit_node =
      touch_subject(st, pid, NodeKind::ExecutionUnit, unit_local, rec.ts, unit_attrs);
  lg.nodes.push_back(unit_node);
  lg.edges.push_back(hierarchy_edge(thread, unit_node, Relation::unit_of()));

  if (!rec.resource) return lg;
  const Relation rel = Relation::syscall(rec.syscall);
  const auto dir = flow_direction(rel);
  if (dir == FlowDirection::Neutral) return lg;
  ProvNode res = resource_node(st.host, *rec.resource);
  EventEdge e;
  e.rel = rel;
  e.timestamps = {rec.ts};
  if (rec.args) e.attrs["args"] = *rec.args;
  if (rec.retval) e.attrs["retval"] = *rec.retval;
  if (dir == FlowDirection::IntoSubject) {
    e.src = res.sig;
    e.dst = unit_node.sig;
  } else {
    e.src = unit_node.sig;
    e.dst = res.sig;
  }
  lg.nodes.push_back(std::move(res));
  lg.edges.push_back(std::move(e));
  return lg;
}

// ---------------------------------------------------------------------------
// Audit

namespace {

struct AuditFields {
  std::vector<std::pair<std::string_view, std::string_view>> kv;

  std::optional<std::string_view> get(std::string_view key) const {
    for (const auto& [k, v] : kv) {
      if (k == key) return v;
    }
    return std::nullopt;
  }
};

/// Splits "k=v k2="quoted v" k3=v3" honouring double quotes.
AuditFields tokenize_audit(std::string_view body) {
  AuditFields out;
  std::size_t i = 0;
  while (i < body.size()) {
    while (i < body.size() && body[i] == ' ') ++i;
    std::size_t key_start = i;
    while (i < body.size() && body[i] != '=' && body[i] != ' ') ++i;
    if (i >= body.size() || body[i] != '=') {
      continue;
    }
    std::string_view key = body.substr(key_start, i - key_start);
    ++i;
    std::string_view value;
    if (i < body.size() && (body[i] == '"' || body[i] == '\'')) {
      char q = body[i++];
      std::size_t start = i;
      while (i < body.size() && body[i] != q) ++i;
      value = body.substr(start, i - start);
      if (i < body.size()) ++i;
    } else {
      std::size_t start = i;
      while (i < body.size() && body[i] != ' ') ++i;
      value = body.substr(start, i - start);
    }
    out.kv.emplace_back(key, value);
  }
  return out;
}

bool is_hex_string(std::string_view s) {
  return !s.empty() && s.size() % 2 == 0 &&
         std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F');
         });
}

std::string hex_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    out.push_back(static_cast<char>(*to_int<int>(s.substr(i, 2), 16)));
  }
  return out;
}

/// Audit prints names containing special characters as bare hex.
std::string audit_string(std::string_view raw, bool was_quoted) {
  if (!was_quoted && is_hex_string(raw)) return hex_decode(raw);
  return std::string(raw);
}

std::optional<std::string> decode_sockaddr(std::string_view hex) {
  if (hex.size() < 4 || !std::all_of(hex.begin(), hex.end(), [](char c) {
        return std::isxdigit(static_cast<unsigned char>(c));
      })) {
    return std::nullopt;
  }
  auto byte = [&](std::size_t i) { return *to_int<int>(hex.substr(i * 2, 2), 16); };
  const std::size_t n = hex.size() / 2;
  const int family = byte(0) | (byte(1) << 8);
  if (family == 2 && n >= 8) {
    const int port = (byte(2) << 8) | byte(3);
    return std::to_string(byte(4)) + "." + std::to_string(byte(5)) + "." +
           std::to_string(byte(6)) + "." + std::to_string(byte(7)) + ":" +
           std::to_string(port);
  }
  if (family == 10 && n >= 24) {
    const int port = (byte(2) << 8) | byte(3);
    std::string addr = "[";
    for (std::size_t g = 0; g < 8; ++g) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "%x", (byte(8 + g * 2) << 8) | byte(9 + g * 2));
      if (g) addr += ":";
      addr += buf;
    }
    return addr + "]:" + std::to_string(port);
  }
  if (family == 1) {
    std::string path;
    for (std::size_t i = 2; i < n && byte(i) != 0; ++i) path.push_back(static_cast<char>(byte(i)));
    return path.empty() ? std::nullopt : std::optional<std::string>(path);
  }
  return std::nullopt;
}

struct AuditHeader {
  std::string_view type;
  Timestamp ts = 0;
  std::uint64_t serial = 0;
  std::string_view body;
};

std::optional<AuditHeader> parse_audit_header(std::string_view line) {
  AuditHeader h;
  if (line.rfind("type=", 0) != 0) return std::nullopt;
  auto sp = line.find(' ');
  if (sp == std::string_view::npos) return std::nullopt;
  h.type = line.substr(5, sp - 5);
  auto m = line.find("msg=audit(", sp);
  if (m == std::string_view::npos) return std::nullopt;
  auto close = line.find(')', m);
  if (close == std::string_view::npos) return std::nullopt;
  std::string_view stamp = line.substr(m + 10, close - m - 10);
  auto colon = stamp.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  std::string_view time = stamp.substr(0, colon);
  auto serial = to_int<std::uint64_t>(stamp.substr(colon + 1));
  auto dot = time.find('.');
  auto sec = to_int<std::int64_t>(time.substr(0, dot));
  if (!serial || !sec) return std::nullopt;
  std::int64_t frac_us = 0;
  if (dot != std::string_view::npos) {
    std::string_view frac = time.substr(dot + 1);
    if (frac.size() > 6) frac = frac.substr(0, 6);
    auto f = to_int<std::int64_t>(frac);
    if (!f) return std::nullopt;
    frac_us = *f;
    for (std::size_t i = frac.size(); i < 6; ++i) frac_us *= 10;
  }
  h.ts = *sec * 1'000'000 + frac_us;
  h.serial = *serial;
  std::size_t body = close + 1;
  if (body < line.size() && line[body] == ':') ++body;
  h.body = line.substr(body);
  return h;
}

}  // namespace

struct AuditParser::Pending {
  Timestamp ts = 0;
  bool has_syscall = false;
  std::map<std::string, std::string, std::less<>> syscall;
  std::map<std::string, bool, std::less<>> quoted;
  struct PathItem {
    std::string name;
    std::string inode;
    std::string nametype;
  };
  std::vector<PathItem> paths;
  std::string cwd;
  std::optional<std::string> sockaddr;
  std::optional<std::pair<int, int>> fd_pair;
  std::vector<std::string> execve_args;
  std::string proctitle;
};

AuditParser::AuditParser(HostState& state, Timestamp window_us)
    : state_(state), window_(window_us) {}

std::vector<ParseOutcome> AuditParser::feed(std::string_view line) {
  std::vector<ParseOutcome> out;
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  if (line.empty()) return out;
  auto header = parse_audit_header(line);
  if (!header) {
    out.push_back({ParseStatus::Skip, std::nullopt, "malformed audit line"});
    return out;
  }

  if (header->type == "UNIT") {
    // Execution-unit boundary announced by an instrumented kernel.
    auto f = tokenize_audit(header->body);
    auto tid = f.get("tid");
    if (!tid) tid = f.get("pid");
    auto unit = f.get("unit");
    std::optional<std::int64_t> t = tid ? to_int<std::int64_t>(*tid) : std::nullopt;
    if (!t || !unit) {
      out.push_back({ParseStatus::Skip, std::nullopt, "malformed UNIT record"});
    } else {
      auto& us = state_.unit_table[*t];
      us.current = std::string(*unit);
      us.deps.clear();
      if (auto dep = f.get("dep")) us.deps.emplace_back(*dep);
      out.push_back({ParseStatus::StateOnly, std::nullopt, {}});
    }
    return out;
  }

  if (header->type == "EOE") {
    flush_before(header->serial, kTimeMin, out);
    if (auto it = pending_.find(header->serial); it != pending_.end()) {
      auto ev = it->second;
      pending_.erase(it);
      out.push_back(complete(*ev));
    }
    flush_before(0, header->ts - window_, out);
    return out;
  }

  auto& slot = pending_[header->serial];
  if (!slot) {
    slot = std::make_shared<Pending>();
    slot->ts = header->ts;
  }
  Pending& ev = *slot;
  auto f = tokenize_audit(header->body);
  auto quoted_in_body = [&](std::string_view key) {
    auto pos = header->body.find(std::string(key) + "=\"");
    return pos != std::string_view::npos && (pos == 0 || header->body[pos - 1] == ' ');
  };
  if (header->type == "SYSCALL") {
    ev.has_syscall = true;
    for (const auto& [k, v] : f.kv) ev.syscall.emplace(std::string(k), std::string(v));
    ev.quoted["comm"] = quoted_in_body("comm");
    ev.quoted["exe"] = quoted_in_body("exe");
  } else if (header->type == "PATH") {
    Pending::PathItem item;
    if (auto n = f.get("name")) item.name = audit_string(*n, quoted_in_body("name"));
    if (auto i = f.get("inode")) item.inode = std::string(*i);
    if (auto t = f.get("nametype")) item.nametype = std::string(*t);
    if (item.name == "(null)") item.name.clear();
    ev.paths.push_back(std::move(item));
  } else if (header->type == "CWD") {
    if (auto c = f.get("cwd")) ev.cwd = audit_string(*c, quoted_in_body("cwd"));
  } else if (header->type == "SOCKADDR") {
    if (auto s = f.get("saddr")) ev.sockaddr = decode_sockaddr(*s);
  } else if (header->type == "FD_PAIR") {
    auto a = f.get("fd0");
    auto b = f.get("fd1");
    if (a && b) {
      auto x = to_int<int>(*a);
      auto y = to_int<int>(*b);
      if (x && y) ev.fd_pair = {*x, *y};
    }
  } else if (header->type == "EXECVE") {
    for (const auto& [k, v] : f.kv) {
      if (k.size() > 1 && k[0] == 'a' && is_digits(k.substr(1))) {
        ev.execve_args.push_back(audit_string(v, quoted_in_body(k)));
      }
    }
  } else if (header->type == "PROCTITLE") {
    if (auto p = f.get("proctitle")) {
      std::string t = audit_string(*p, quoted_in_body("proctitle"));
      std::replace(t.begin(), t.end(), '\0', ' ');
      ev.proctitle = t;
    }
  }
  flush_before(0, header->ts - window_, out);
  return out;
}

std::vector<ParseOutcome> AuditParser::finish() {
  std::vector<ParseOutcome> out;
  while (!pending_.empty()) {
    auto ev = pending_.begin()->second;
    pending_.erase(pending_.begin());
    out.push_back(complete(*ev));
  }
  return out;
}

void AuditParser::flush_before(std::uint64_t serial, Timestamp older_than,
                               std::vector<ParseOutcome>& out) {
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (it->first < serial || it->second->ts < older_than) {
      auto ev = it->second;
      it = pending_.erase(it);
      out.push_back(complete(*ev));
    } else {
      ++it;
    }
  }
}

ParseOutcome AuditParser::complete(Pending& ev) {
  ParseOutcome skip{ParseStatus::Skip, std::nullopt, {}};
  if (!ev.has_syscall) return skip;
  auto get = [&](std::string_view k) -> std::optional<std::string> {
    auto it = ev.syscall.find(k);
    if (it == ev.syscall.end()) return std::nullopt;
    return it->second;
  };
  auto sc = get("syscall");
  if (!sc) return {ParseStatus::Skip, std::nullopt, "SYSCALL record without syscall"};
  std::string raw_name;
  if (auto nr = to_int<long>(*sc)) {
    auto name = x86_64_syscall_name(*nr);
    if (!name) return skip;
    raw_name = std::string(*name);
  } else {
    raw_name = *sc;
  }
  if (auto s = get("success"); s && *s == "no") return skip;

  EventRecord rec;
  rec.host = state_.host;
  rec.ts = ev.ts;
  rec.syscall = canonical_syscall(raw_name);
  auto pid = get("pid") ? to_int<std::int64_t>(*get("pid")) : std::nullopt;
  if (!pid) return {ParseStatus::Skip, std::nullopt, "SYSCALL record without pid"};
  rec.pid = pid;
  if (auto p = get("ppid")) rec.ppid = to_int<std::int64_t>(*p);
  if (auto t = get("tid")) rec.tid = to_int<std::int64_t>(*t);
  if (auto u = get("unit")) rec.unit_id = *u;
  if (auto c = get("comm")) rec.comm = audit_string(*c, ev.quoted["comm"]);
  if (auto e = get("exe")) rec.exe = audit_string(*e, ev.quoted["exe"]);
  if (rec.comm.empty() && !rec.exe.empty()) rec.comm = basename_of(rec.exe);
  if (auto x = get("exit")) rec.retval = *x;
  auto exit_val = rec.retval ? to_int<std::int64_t>(*rec.retval) : std::nullopt;
  auto arg = [&](const char* key) -> std::optional<std::int64_t> {
    auto v = get(key);
    if (!v) return std::nullopt;
    return to_int<std::int64_t>(*v, 16);
  };

  auto path_of = [&](std::string_view want_type) -> std::optional<Pending::PathItem> {
    std::optional<Pending::PathItem> pick;
    for (const auto& p : ev.paths) {
      if (p.name.empty() || p.nametype == "PARENT") continue;
      if (!want_type.empty() && p.nametype == want_type) return p;
      pick = p;
    }
    return pick;
  };
  auto absolute = [&](std::string name) {
    if (!name.empty() && name.front() != '/' && !ev.cwd.empty()) {
      name = ev.cwd + (ev.cwd.back() == '/' ? "" : "/") + name;
    }
    return name;
  };
  auto file_ref = [&](const Pending::PathItem& p) {
    ResourceRef r{NodeKind::File, absolute(p.name), std::nullopt};
    if (!p.inode.empty()) r.inode = p.inode;
    return r;
  };
  auto resolve_fd = [&](std::int64_t fd) {
    auto it = state_.fd_table.find({*rec.pid, static_cast<int>(fd)});
    if (it != state_.fd_table.end()) return it->second;
    return ResourceRef{NodeKind::File, "fd:" + std::to_string(fd) + "(unresolved)",
                       "pid" + std::to_string(*rec.pid)};
  };
  auto key = [&](std::int64_t fd) { return std::make_pair(*rec.pid, static_cast<int>(fd)); };
  ParseOutcome state_only{ParseStatus::StateOnly, std::nullopt, {}};
  ParseOutcome event{ParseStatus::Event, std::nullopt, {}};

  const std::string& n = rec.syscall;
  if (n == "open") {
    auto p = path_of("");
    if (exit_val && *exit_val >= 0 && p) state_.fd_table[key(*exit_val)] = file_ref(*p);
    return state_only;
  }
  if (n == "dup" || n == "dup2") {
    auto old_fd = arg("a0");
    std::optional<std::int64_t> new_fd = exit_val;
    if (n == "dup2" && (!new_fd || *new_fd < 0)) new_fd = arg("a1");
    if (old_fd && new_fd && *new_fd >= 0) {
      auto it = state_.fd_table.find(key(*old_fd));
      if (it != state_.fd_table.end()) state_.fd_table[key(*new_fd)] = it->second;
    }
    return state_only;
  }
  if (n == "close") {
    if (auto fd = arg("a0")) state_.fd_table.erase(key(*fd));
    return state_only;
  }
  if (n == "pipe") {
    if (ev.fd_pair) {
      ResourceRef r{NodeKind::Pipe, "pipe:[" + std::to_string(*rec.pid) + "." +
                                        std::to_string(ev.ts) + "]",
                    std::nullopt};
      state_.fd_table[key(ev.fd_pair->first)] = r;
      state_.fd_table[key(ev.fd_pair->second)] = r;
    }
    return state_only;
  }
  if (n == "socket") return state_only;

  const SyscallRole role = syscall_role(n);
  if (role == SyscallRole::Lifecycle) {
    if (n == "execve") {
      std::string cmdline = ev.proctitle;
      if (cmdline.empty()) {
        for (const auto& a : ev.execve_args) cmdline += (cmdline.empty() ? "" : " ") + a;
      }
      if (!cmdline.empty()) rec.args = cmdline;
    }
    if (n == "exit" || n == "exit_group") {
      for (auto it = state_.fd_table.lower_bound(key(std::numeric_limits<int>::min()));
           it != state_.fd_table.end() && it->first.first == *rec.pid;) {
        it = state_.fd_table.erase(it);
      }
    }
    event.record = std::move(rec);
    return event;
  }
  if (role != SyscallRole::Causal) return skip;

  if (n == "connect" || n == "accept") {
    auto fd = n == "connect" ? arg("a0") : exit_val;
    if (ev.sockaddr) {
      ResourceRef r{NodeKind::Socket, *ev.sockaddr, std::nullopt};
      if (fd && *fd >= 0) state_.fd_table[key(*fd)] = r;
      rec.resource = r;
    } else if (fd && *fd >= 0) {
      rec.resource = resolve_fd(*fd);
    }
    if (fd) rec.fd = static_cast<int>(*fd);
  } else if (n == "unlink" || n == "rename" ||
             (n == "chmod" && raw_name != "fchmod")) {
    auto p = path_of(n == "rename" ? "CREATE" : n == "unlink" ? "DELETE" : "");
    if (p) rec.resource = file_ref(*p);
  } else {
    if (auto fd = arg("a0")) {
      rec.fd = static_cast<int>(*fd);
      rec.resource = resolve_fd(*fd);
    }
  }
  event.record = std::move(rec);
  return event;
}

// ---------------------------------------------------------------------------
// Record vocabulary shared by Sysdig and CSV

namespace {

enum class Field {
  Ts, TsNanos, Host, Syscall, Pid, Tid, Ppid, AncestorPid, Comm, Exe, Pcomm,
  AncestorName, Unit, Fd, Args, Retval, Resource, Ignored,
};

struct FieldAlias {
  std::string_view name;
  Field field;
};

constexpr FieldAlias kVocabulary[] = {
    {"ts", Field::Ts},
    {"evt.rawtime", Field::TsNanos},
    {"host", Field::Host},
    {"syscall", Field::Syscall},
    {"evt.type", Field::Syscall},
    {"pid", Field::Pid},
    {"proc.pid", Field::Pid},
    {"tid", Field::Tid},
    {"thread.tid", Field::Tid},
    {"ppid", Field::Ppid},
    {"proc.ppid", Field::Ppid},
    {"ancestor_pid", Field::AncestorPid},
    {"apid", Field::AncestorPid},
    {"proc.apid", Field::AncestorPid},
    {"comm", Field::Comm},
    {"pname", Field::Comm},
    {"proc.name", Field::Comm},
    {"exe", Field::Exe},
    {"proc.exe", Field::Exe},
    {"proc.exepath", Field::Exe},
    {"pcomm", Field::Pcomm},
    {"ppname", Field::Pcomm},
    {"proc.pname", Field::Pcomm},
    {"ancestor_name", Field::AncestorName},
    {"aname", Field::AncestorName},
    {"proc.aname", Field::AncestorName},
    {"unit_id", Field::Unit},
    {"unit", Field::Unit},
    {"fd", Field::Fd},
    {"fd.num", Field::Fd},
    {"args", Field::Args},
    {"evt.args", Field::Args},
    {"retval", Field::Retval},
    {"evt.res", Field::Retval},
    {"evt.rawres", Field::Retval},
    {"fd_name", Field::Resource},
    {"fd.name", Field::Resource},
    {"fd_kind", Field::Resource},
    {"fd.type", Field::Resource},
    {"fd.typechar", Field::Resource},
    {"inode", Field::Resource},
    {"fd.ino", Field::Resource},
    {"path", Field::Resource},
    {"endpoint", Field::Resource},
    {"uid", Field::Ignored},
    {"user.uid", Field::Ignored},
    {"evt.dir", Field::Ignored},
    {"evt.num", Field::Ignored},
    {"evt.cpu", Field::Ignored},
};

std::optional<Field> lookup_field(std::string_view name) {
  for (const auto& a : kVocabulary) {
    if (a.name == name) return a.field;
  }
  return std::nullopt;
}

std::string canonical_resource_field(std::string_view name) {
  if (name == "fd.name") return "fd_name";
  if (name == "fd.type" || name == "fd.typechar") return "fd_kind";
  if (name == "fd.ino") return "inode";
  return std::string(name);
}

std::int64_t need_int(std::string_view name, std::string_view value) {
  auto v = to_int<std::int64_t>(value);
  if (!v) {
    throw Error(ErrorCode::TypeError,
                std::string(name) + " is not an integer: '" + std::string(value) + "'");
  }
  return *v;
}

/// "ts" accepts integer microseconds or decimal seconds.
Timestamp parse_ts(std::string_view value) {
  auto dot = value.find('.');
  if (dot == std::string_view::npos) return need_int("ts", value);
  auto sec = to_int<std::int64_t>(value.substr(0, dot));
  std::string_view frac = value.substr(dot + 1);
  if (frac.size() > 6) frac = frac.substr(0, 6);
  auto f = frac.empty() ? std::optional<std::int64_t>(0) : to_int<std::int64_t>(frac);
  if (!sec || !f) {
    throw Error(ErrorCode::TypeError, "ts is not a number: '" + std::string(value) + "'");
  }
  std::int64_t us = *f;
  for (std::size_t i = frac.size(); i < 6; ++i) us *= 10;
  return *sec * 1'000'000 + us;
}

}  // namespace

bool apply_record_field(EventRecord& rec, std::string_view name, std::string_view value,
                        std::map<std::string, std::string>& res) {
  auto field = lookup_field(name);
  if (!field) return false;
  if (value.empty() || value == "<NA>") return true;
  switch (*field) {
    case Field::Ts: rec.ts = parse_ts(value); break;
    case Field::TsNanos: rec.ts = need_int(name, value) / 1000; break;
    case Field::Host: rec.host = HostId(std::string(value)); break;
    case Field::Syscall: rec.syscall = canonical_syscall(value); break;
    case Field::Pid: rec.pid = need_int(name, value); break;
    case Field::Tid: rec.tid = need_int(name, value); break;
    case Field::Ppid: rec.ppid = need_int(name, value); break;
    case Field::AncestorPid: rec.ancestor_pid = need_int(name, value); break;
    case Field::Comm: rec.comm = std::string(value); break;
    case Field::Exe: rec.exe = std::string(value); break;
    case Field::Pcomm: rec.pcomm = std::string(value); break;
    case Field::AncestorName: rec.ancestor_name = std::string(value); break;
    case Field::Unit: rec.unit_id = std::string(value); break;
    case Field::Fd: rec.fd = static_cast<int>(need_int(name, value)); break;
    case Field::Args: rec.args = std::string(value); break;
    case Field::Retval: rec.retval = std::string(value); break;
    case Field::Resource: res[canonical_resource_field(name)] = std::string(value); break;
    case Field::Ignored: break;
  }
  return true;
}

void finish_record(EventRecord& rec, const std::map<std::string, std::string>& res) {
  auto get = [&](const char* k) -> std::string {
    auto it = res.find(k);
    return it == res.end() ? std::string() : it->second;
  };
  const std::string inode = get("inode");
  if (auto path = get("path"); !path.empty()) {
    rec.resource = ResourceRef{NodeKind::File, path, std::nullopt};
  } else if (auto ep = get("endpoint"); !ep.empty()) {
    rec.resource = ResourceRef{NodeKind::Socket, ep, std::nullopt};
  } else if (auto fdn = get("fd_name"); !fdn.empty()) {
    rec.resource = infer_resource(fdn, get("fd_kind"));
  }
  if (rec.resource && rec.resource->kind == NodeKind::File && !inode.empty() && inode != "0") {
    rec.resource->inode = inode;
  }
  if (rec.comm.empty() && !rec.exe.empty()) rec.comm = basename_of(rec.exe);
}

// ---------------------------------------------------------------------------
// Sysdig

SysdigLayout SysdigLayout::parse(std::string_view format) {
  SysdigLayout layout;
  std::size_t i = 0;
  std::string literal;
  auto is_field_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_';
  };
  while (i < format.size()) {
    if (format[i] == '%' && i + 1 < format.size() && is_field_char(format[i + 1])) {
      if (layout.fields_.empty()) {
        layout.lead_ = literal;
      } else {
        if (literal.empty()) {
          throw Error(ErrorCode::InvalidConfig,
                      "adjacent fields without separator in sysdig format");
        }
        layout.seps_.push_back(literal);
      }
      literal.clear();
      std::size_t start = ++i;
      while (i < format.size() && is_field_char(format[i])) ++i;
      // Indexed fields such as %evt.arg[0].
      if (i < format.size() && format[i] == '[') {
        const auto close = format.find(']', i);
        if (close != std::string_view::npos) i = close + 1;
      }
      layout.fields_.emplace_back(format.substr(start, i - start));
    } else {
      literal.push_back(format[i++]);
    }
  }
  if (layout.fields_.empty()) {
    throw Error(ErrorCode::InvalidConfig, "sysdig format has no %fields");
  }
  return layout;
}

std::optional<std::vector<std::pair<std::string, std::string>>> SysdigLayout::split(
    std::string_view line) const {
  if (line.substr(0, lead_.size()) != lead_) return std::nullopt;
  std::size_t pos = lead_.size();
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(fields_.size());
  for (std::size_t f = 0; f < fields_.size(); ++f) {
    if (f + 1 == fields_.size()) {
      out.emplace_back(fields_[f], std::string(line.substr(pos)));
      break;
    }
    auto next = line.find(seps_[f], pos);
    if (next == std::string_view::npos) return std::nullopt;
    out.emplace_back(fields_[f], std::string(line.substr(pos, next - pos)));
    pos = next + seps_[f].size();
  }
  return out;
}

ParseOutcome parse_sysdig_line(std::string_view line, SysdigFormat format,
                               const SysdigLayout* layout, const HostId& host) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  ParseOutcome out;
  EventRecord rec;
  rec.host = host;
  std::map<std::string, std::string> res;
  bool have_ts = false;
  std::string dir;
  auto apply = [&](std::string_view k, std::string_view v) {
    if (k == "evt.dir") dir = std::string(v);
    if (apply_record_field(rec, k, v, res)) {
      if ((k == "ts" || k == "evt.rawtime") && !v.empty() && v != "<NA>") have_ts = true;
    }
  };
  try {
    if (format == SysdigFormat::Json) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        out.warning = "malformed sysdig json";
        return out;
      }
      for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& v = it.value();
        if (v.is_null()) continue;
        if (v.is_string()) {
          apply(it.key(), v.get<std::string>());
        } else if (v.is_number_float()) {
          // Only "ts" is fractional in practice; keep microsecond precision.
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.6f", v.get<double>());
          apply(it.key(), buf);
        } else if (v.is_primitive()) {
          apply(it.key(), v.dump());
        }
      }
    } else {
      if (!layout) throw Error(ErrorCode::InvalidConfig, "plain sysdig needs a capture format");
      auto fields = layout->split(line);
      if (!fields) {
        out.warning = "line does not match sysdig capture format";
        return out;
      }
      for (const auto& [k, v] : *fields) apply(k, v);
    }
  } catch (const Error& e) {
    out.warning = e.what();
    return out;
  }
  if (dir == ">") return out;  // enter half of a syscall pair
  if (!have_ts || rec.syscall.empty()) {
    out.warning = "sysdig record missing ts or syscall";
    return out;
  }
  finish_record(rec, res);
  out.status = ParseStatus::Event;
  out.record = std::move(rec);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

CsvHeaderSpec::CsvHeaderSpec(std::vector<std::string> columns) : columns_(std::move(columns)) {
  bool ts = false, syscall = false, pid = false, resource = false;
  for (const auto& c : columns_) {
    auto f = lookup_field(c);
    if (!f) throw Error(ErrorCode::UnknownHeaderField, "unknown CSV column '" + c + "'");
    ts |= *f == Field::Ts || *f == Field::TsNanos;
    syscall |= *f == Field::Syscall;
    pid |= *f == Field::Pid;
    resource |= c == "path" || c == "fd_name" || c == "fd.name" || c == "endpoint";
  }
  if (!ts || !syscall || !(pid || resource)) {
    throw Error(ErrorCode::InvalidArgument,
                "CSV header needs ts, syscall and a pid or resource column");
  }
}

CsvHeaderSpec CsvHeaderSpec::from_header_line(std::string_view line) {
  auto cells = split_csv(line);
  for (auto& c : cells) {
    auto b = c.find_first_not_of(" \t");
    auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return CsvHeaderSpec(std::move(cells));
}

std::vector<std::string> split_csv(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

EventRecord parse_csv_record(const CsvHeaderSpec& spec, std::string_view line,
                             const HostId& host) {
  auto cells = split_csv(line);
  if (cells.size() != spec.columns().size()) {
    throw Error(ErrorCode::ColumnCountMismatch,
                "expected " + std::to_string(spec.columns().size()) + " cells, got " +
                    std::to_string(cells.size()));
  }
  EventRecord rec;
  rec.host = host;
  std::map<std::string, std::string> res;
  bool have_ts = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& col = spec.columns()[i];
    if ((col == "ts" || col == "evt.rawtime") && !cells[i].empty()) have_ts = true;
    apply_record_field(rec, col, cells[i], res);
  }
  if (!have_ts || rec.syscall.empty()) {
    throw Error(ErrorCode::MalformedRecord, "CSV record missing ts or syscall");
  }
  finish_record(rec, res);
  return rec;
}

// ---------------------------------------------------------------------------
// Processing

HostState& EventProcessor::state(const HostId& host) {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) it = hosts_.emplace(host, HostState(host)).first;
  return it->second;
}

EventProcessor::Result EventProcessor::process(const EventRecord& rec) {
  Result r;
  switch (syscall_role(rec.syscall)) {
    case SyscallRole::Causal:
      r.kind = Kind::Graph;
      r.graph = build_line_graph(rec, state(rec.host));
      break;
    case SyscallRole::Lifecycle:
      if (!rec.pid) break;
      build_line_graph(rec, state(rec.host));
      r.kind = Kind::Lifecycle;
      break;
    case SyscallRole::FdState:
      r.kind = Kind::StateOnly;
      break;
    case SyscallRole::Unknown:
      ++unknown_;
      break;
  }
  return r;
}

std::optional<LogFormat> parse_log_format(std::string_view text) {
  if (text == "audit") return LogFormat::Audit;
  if (text == "sysdig-json") return LogFormat::SysdigJson;
  if (text == "sysdig-plain") return LogFormat::SysdigPlain;
  if (text == "csv") return LogFormat::Csv;
  return std::nullopt;
}

LineIngestor::LineIngestor(IngestOptions opts, EventProcessor& processor, RecordSink& sink)
    : opts_(std::move(opts)), processor_(processor), sink_(sink) {
  if (opts_.format == LogFormat::Audit) {
    audit_ = std::make_unique<AuditParser>(processor_.state(opts_.host));
  } else if (opts_.format == LogFormat::SysdigPlain) {
    layout_ = SysdigLayout::parse(opts_.sysdig_format);
  }
}

LineIngestor::~LineIngestor() = default;

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

}  // namespace

void LineIngestor::feed(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  if (line.empty()) return;
  const auto t0 = Clock::now();
  switch (opts_.format) {
    case LogFormat::Audit:
      for (auto& o : audit_->feed(line)) handle(std::move(o), micros_since(t0));
      break;
    case LogFormat::SysdigJson:
      handle(parse_sysdig_line(line, SysdigFormat::Json, nullptr, opts_.host),
             micros_since(t0));
      break;
    case LogFormat::SysdigPlain:
      handle(parse_sysdig_line(line, SysdigFormat::Plain, &*layout_, opts_.host),
             micros_since(t0));
      break;
    case LogFormat::Csv: {
      if (!opts_.header) {
        opts_.header = CsvHeaderSpec::from_header_line(line);
        return;
      }
      ParseOutcome o;
      try {
        o.record = parse_csv_record(*opts_.header, line, opts_.host);
        o.status = ParseStatus::Event;
      } catch (const Error& e) {
        o.warning = e.what();
      }
      handle(std::move(o), micros_since(t0));
      break;
    }
  }
}

void LineIngestor::finish() {
  if (!audit_) return;
  const auto t0 = Clock::now();
  for (auto& o : audit_->finish()) handle(std::move(o), micros_since(t0));
}

void LineIngestor::handle(ParseOutcome&& o, double parse_us) {
  const auto t0 = Clock::now();
  if (!o.warning.empty() && warnings_.size() < 1000) warnings_.push_back(o.warning);
  switch (o.status) {
    case ParseStatus::Skip: ++stats_.skipped; return;
    case ParseStatus::StateOnly: ++stats_.state_only; return;
    case ParseStatus::Event: break;
  }
  try {
    auto r = processor_.process(*o.record);
    switch (r.kind) {
      case EventProcessor::Kind::Graph:
        ++stats_.parsed;
        stats_.emitted_nodes += static_cast<std::int64_t>(r.graph->nodes.size());
        stats_.emitted_edges += static_cast<std::int64_t>(r.graph->edges.size());
        sink_.on_record(*o.record, &*r.graph);
        break;
      case EventProcessor::Kind::Lifecycle:
        ++stats_.parsed;
        sink_.on_record(*o.record, nullptr);
        break;
      case EventProcessor::Kind::StateOnly: ++stats_.state_only; break;
      case EventProcessor::Kind::Skipped: ++stats_.skipped; break;
    }
  } catch (const Error& e) {
    ++stats_.skipped;
    if (warnings_.size() < 1000) warnings_.push_back(e.what());
  }
  if (stats_.latency_us.size() < IngestStats::kMaxLatencySamples) {
    stats_.latency_us.push_back(parse_us + micros_since(t0));
  }
}

IngestStats ingest_stream(std::istream& in, const IngestOptions& opts,
                          EventProcessor& processor, RecordSink& sink) {
  LineIngestor ing(opts, processor, sink);
  std::string line;
  while (std::getline(in, line)) ing.feed(line);
  ing.finish();
  return ing.stats();
}

}  // namespace graalf
