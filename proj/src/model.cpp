#include "graalf/model.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <set>

namespace graalf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingIdentifier: return "MissingIdentifier";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownHeaderField: return "UnknownHeaderField";
    case ErrorCode::ColumnCountMismatch: return "ColumnCountMismatch";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::EmptyRecord: return "EmptyRecord";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::CannotEvict: return "CannotEvict";
    case ErrorCode::EmptyCriteria: return "EmptyCriteria";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

namespace {

std::string syntax_message(std::size_t token, std::size_t offset,
                           const std::vector<std::string>& expected,
                           const std::string& found) {
  std::string msg = "syntax error at token " + std::to_string(token) +
                    " (offset " + std::to_string(offset) + "): found '" +
                    found + "', expected ";
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i) msg += i + 1 == expected.size() ? " or " : ", ";
    msg += expected[i];
  }
  if (expected.empty()) msg += "end of input";
  return msg;
}

}  // namespace

SyntaxError::SyntaxError(std::size_t token, std::size_t offset,
                         std::vector<std::string> expected,
                         const std::string& found)
    : Error(ErrorCode::SyntaxError,
            syntax_message(token, offset, expected, found)),
      token_(token),
      offset_(offset),
      expected_(std::move(expected)) {}

HostId::HostId(std::string value) : value_(std::move(value)) {
  if (value_.empty()) throw Error(ErrorCode::InvalidArgument, "empty host id");
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Process: return "Process";
    case NodeKind::Thread: return "Thread";
    case NodeKind::ExecutionUnit: return "ExecutionUnit";
    case NodeKind::File: return "File";
    case NodeKind::Socket: return "Socket";
    case NodeKind::Pipe: return "Pipe";
  }
  return "?";
}

std::optional<NodeKind> parse_node_kind(std::string_view text) {
  for (std::size_t i = 0; i < kNodeKindCount; ++i) {
    auto k = static_cast<NodeKind>(i);
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string to_string(const SignatureKey& sig) {
  return sig.host.str() + "/" + std::string(to_string(sig.kind)) + "/" +
         sig.local_id + "@" + std::to_string(sig.epoch);
}

namespace {

inline void hash_combine(std::size_t& seed, std::size_t v) {
  seed ^= v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
}

}  // namespace

std::size_t SignatureKeyHash::operator()(const SignatureKey& sig) const noexcept {
  std::size_t h = std::hash<std::string>{}(sig.host.str());
  hash_combine(h, static_cast<std::size_t>(sig.kind));
  hash_combine(h, std::hash<std::string>{}(sig.local_id));
  hash_combine(h, std::hash<std::int64_t>{}(sig.epoch));
  return h;
}

std::size_t EdgeKeyHash::operator()(const EdgeKey& key) const noexcept {
  SignatureKeyHash sh;
  std::size_t h = sh(key.src);
  hash_combine(h, sh(key.dst));
  hash_combine(h, static_cast<std::size_t>(key.rel.kind()));
  hash_combine(h, std::hash<std::string>{}(key.rel.syscall_name()));
  return h;
}

bool ProvNode::synthetic() const {
  auto it = attrs.find("synthetic");
  return it != attrs.end() && it->second == "true";
}

Relation Relation::syscall(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower.empty()) throw Error(ErrorCode::InvalidArgument, "empty syscall name");
  return Relation(RelationKind::SysCall, std::move(lower));
}

Relation Relation::parse(std::string_view text) {
  if (text == "Spawn") return spawn();
  if (text == "UnitOf") return unit_of();
  return syscall(text);
}

std::string to_string(const Relation& rel) {
  switch (rel.kind()) {
    case RelationKind::Spawn: return "Spawn";
    case RelationKind::UnitOf: return "UnitOf";
    case RelationKind::SysCall: return rel.syscall_name();
  }
  return {};
}

std::string_view to_string(FlowDirection dir) {
  switch (dir) {
    case FlowDirection::IntoSubject: return "IntoSubject";
    case FlowDirection::OutOfSubject: return "OutOfSubject";
    case FlowDirection::Neutral: return "Neutral";
  }
  return "?";
}

std::string_view to_string(CompressionLevel level) {
  switch (level) {
    case CompressionLevel::C0: return "c0";
    case CompressionLevel::C1: return "c1";
    case CompressionLevel::C2: return "c2";
    case CompressionLevel::C3: return "c3";
  }
  return "?";
}

std::optional<CompressionLevel> parse_compression_level(std::string_view text) {
  if (text.size() != 2 || (text[0] != 'c' && text[0] != 'C')) return std::nullopt;
  switch (text[1]) {
    case '0': return CompressionLevel::C0;
    case '1': return CompressionLevel::C1;
    case '2': return CompressionLevel::C2;
    case '3': return CompressionLevel::C3;
    default: return std::nullopt;
  }
}

bool is_well_formed(const LineGraph& lg) {
  if (lg.nodes.empty() || lg.nodes.size() > kLineGraphMaxNodes ||
      lg.edges.size() > kLineGraphMaxEdges) {
    return false;
  }
  std::map<SignatureKey, int> degree;
  for (const auto& n : lg.nodes) {
    if (n.title.empty() || n.sig.local_id.empty()) return false;
    if (!degree.emplace(n.sig, 0).second) return false;
  }
  // A path over k distinct nodes has exactly k-1 edges, no vertex of degree
  // above two, and is connected.
  if (lg.edges.size() + 1 != lg.nodes.size()) return false;
  std::map<SignatureKey, std::vector<SignatureKey>> adj;
  for (const auto& e : lg.edges) {
    if (!degree.count(e.src) || !degree.count(e.dst) || e.src == e.dst) return false;
    if (e.timestamps.empty() ||
        !std::is_sorted(e.timestamps.begin(), e.timestamps.end()) ||
        e.count < static_cast<std::int64_t>(e.timestamps.size())) {
      return false;
    }
    if (++degree[e.src] > 2 || ++degree[e.dst] > 2) return false;
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  std::set<SignatureKey> seen{lg.nodes.front().sig};
  std::vector<SignatureKey> stack{lg.nodes.front().sig};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    for (const auto& nb : adj[cur]) {
      if (seen.insert(nb).second) stack.push_back(nb);
    }
  }
  return seen.size() == lg.nodes.size();
}

void ForensicGraph::add_node(const ProvNode& node, int step) {
  auto [it, inserted] = nodes.emplace(node.sig, node);
  if (!inserted) {
    for (const auto& [k, v] : node.attrs) it->second.attrs.emplace(k, v);
    if (it->second.title.empty()) it->second.title = node.title;
  }
  auto [sit, sinserted] = step_of.emplace(node.sig, step);
  if (!sinserted) sit->second = std::min(sit->second, step);
}

void ForensicGraph::add_edge(const EventEdge& edge) {
  auto [it, inserted] = edges.emplace(key_of(edge), edge);
  if (inserted) return;
  auto& cur = it->second;
  std::vector<Timestamp> merged;
  merged.reserve(cur.timestamps.size() + edge.timestamps.size());
  std::merge(cur.timestamps.begin(), cur.timestamps.end(),
             edge.timestamps.begin(), edge.timestamps.end(),
             std::back_inserter(merged));
  cur.timestamps = std::move(merged);
  cur.count += edge.count;
  for (const auto& [k, v] : edge.attrs) cur.attrs.emplace(k, v);
}

ForensicGraph merge_graphs(const ForensicGraph& a, const ForensicGraph& b) {
  ForensicGraph out = a;
  for (const auto& [sig, node] : b.nodes) {
    auto st = b.step_of.find(sig);
    out.add_node(node, st == b.step_of.end() ? 0 : st->second);
  }
  for (const auto& [key, edge] : b.edges) out.add_edge(edge);
  return out;
}

namespace {

std::optional<std::string> attr(const Attrs& raw, std::string_view key) {
  auto it = raw.find(key);
  if (it == raw.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

[[noreturn]] void missing(NodeKind kind, std::string_view what) {
  throw Error(ErrorCode::MissingIdentifier,
              std::string(to_string(kind)) + " requires '" + std::string(what) + "'");
}

Timestamp parse_epoch(const Attrs& raw) {
  auto v = attr(raw, "first_seen");
  if (!v) return 0;
  Timestamp out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || p != v->data() + v->size()) {
    throw Error(ErrorCode::TypeError, "first_seen is not an integer: " + *v);
  }
  return out;
}

}  // namespace

SignatureKey node_signature(NodeKind kind, const HostId& host, const Attrs& raw) {
  SignatureKey key{host, kind, {}, 0};
  switch (kind) {
    case NodeKind::Process: {
      auto pid = attr(raw, "pid");
      if (!pid) missing(kind, "pid");
      key.local_id = *pid;
      key.epoch = parse_epoch(raw);
      break;
    }
    case NodeKind::Thread: {
      auto tid = attr(raw, "tid");
      if (!tid) missing(kind, "tid");
      key.local_id = *tid;
      key.epoch = parse_epoch(raw);
      break;
    }
    case NodeKind::ExecutionUnit: {
      auto tid = attr(raw, "tid");
      auto unit = attr(raw, "unit");
      if (!tid) missing(kind, "tid");
      if (!unit) missing(kind, "unit");
      key.local_id = *tid + ".unit" + *unit;
      key.epoch = parse_epoch(raw);
      break;
    }
    case NodeKind::File: {
      auto path = attr(raw, "path");
      auto inode = attr(raw, "inode");
      if (!path) missing(kind, "path");
      key.local_id = inode ? *inode + ":" + *path : *path;
      break;
    }
    case NodeKind::Socket: {
      auto addr = attr(raw, "addr");
      auto port = attr(raw, "port");
      if (addr && port) {
        key.local_id = *addr + ":" + *port;
      } else if (auto ep = attr(raw, "endpoint")) {
        key.local_id = *ep;
      } else {
        missing(kind, "addr/port");
      }
      break;
    }
    case NodeKind::Pipe: {
      auto id = attr(raw, "pipe");
      if (!id) missing(kind, "pipe");
      key.local_id = *id;
      break;
    }
  }
  return key;
}

std::string format_iso8601(Timestamp ts) {
  using namespace std::chrono;
  auto tp = sys_time<microseconds>(microseconds(ts));
  auto day = floor<days>(tp);
  year_month_day ymd{day};
  hh_mm_ss<microseconds> hms{tp - day};
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%06lldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()),
                static_cast<long long>(hms.subseconds().count()));
  return buf;
}

namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

}  // namespace

std::optional<TimeWindow> parse_date_prefix(std::string_view p) {
  using namespace std::chrono;
  int y = 0, mo = 1, d = 1, h = 0, mi = 0, s = 0;
  if (!read_digits(p, 0, 4, y)) return std::nullopt;

  // Each accepted length names a granularity; the window spans one unit of it.
  enum class Unit { Year, Month, Day, Hour, Minute, Second } unit;
  if (p.size() == 4) {
    unit = Unit::Year;
  } else if (p.size() == 7 && p[4] == '-' && read_digits(p, 5, 2, mo)) {
    unit = Unit::Month;
  } else if (p.size() >= 10 && p[4] == '-' && p[7] == '-' &&
             read_digits(p, 5, 2, mo) && read_digits(p, 8, 2, d)) {
    if (p.size() == 10) {
      unit = Unit::Day;
    } else if ((p[10] != 'T' && p[10] != ' ') || !read_digits(p, 11, 2, h)) {
      return std::nullopt;
    } else if (p.size() == 13) {
      unit = Unit::Hour;
    } else if (p.size() == 16 && p[13] == ':' && read_digits(p, 14, 2, mi)) {
      unit = Unit::Minute;
    } else if (p.size() == 19 && p[13] == ':' && p[16] == ':' &&
               read_digits(p, 14, 2, mi) && read_digits(p, 17, 2, s)) {
      unit = Unit::Second;
    } else {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || h > 23 || mi > 59 || s > 59) return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                     day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;

  sys_days start_day{ymd};
  auto begin = time_point_cast<microseconds>(start_day) + hours(h) + minutes(mi) +
               seconds(s);
  sys_time<microseconds> end;
  switch (unit) {
    case Unit::Year: end = sys_days{year{y + 1} / 1 / 1}; break;
    case Unit::Month: end = sys_days{ymd.year() / ymd.month() / 1 + months(1)}; break;
    case Unit::Day: end = start_day + days(1); break;
    case Unit::Hour: end = begin + hours(1); break;
    case Unit::Minute: end = begin + minutes(1); break;
    case Unit::Second: end = begin + seconds(1); break;
  }
  return TimeWindow{begin.time_since_epoch().count(),
                    end.time_since_epoch().count() - 1};
}

}  // namespace graalf
