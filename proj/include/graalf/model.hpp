/**
 * @file model.hpp
 * @brief Provenance graph domain types shared by every layer.
 *
 * A provenance graph has four subject layers (process, thread, execution
 * unit) above the resources they touch (file, socket, pipe). Every node is
 * identified by a SignatureKey; every causal event is an EventEdge whose
 * timestamp list shape depends on the store's compression level.
 */
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graalf/errors.hpp"

namespace graalf {

/// Microseconds since the Unix epoch.
using Timestamp = std::int64_t;

inline constexpr Timestamp kTimeMin = std::numeric_limits<Timestamp>::min();
inline constexpr Timestamp kTimeMax = std::numeric_limits<Timestamp>::max();

using Attrs = std::map<std::string, std::string, std::less<>>;

/// Name of the machine a record came from. Never empty.
class HostId {
 public:
  HostId() : value_("localhost") {}
  explicit HostId(std::string value);

  const std::string& str() const noexcept { return value_; }

  auto operator<=>(const HostId&) const = default;

 private:
  std::string value_;
};

enum class NodeKind : std::uint8_t {
  Process,
  Thread,
  ExecutionUnit,
  File,
  Socket,
  Pipe,
};

inline constexpr std::size_t kNodeKindCount = 6;

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view text);

inline bool is_subject(NodeKind kind) {
  return kind == NodeKind::Process || kind == NodeKind::Thread ||
         kind == NodeKind::ExecutionUnit;
}

struct SignatureKey {
  HostId host;
  NodeKind kind = NodeKind::Process;
  std::string local_id;
  Timestamp epoch = 0;

  auto operator<=>(const SignatureKey&) const = default;
};

std::string to_string(const SignatureKey& sig);

struct SignatureKeyHash {
  std::size_t operator()(const SignatureKey& sig) const noexcept;
};

struct ProvNode {
  SignatureKey sig;
  std::string title;
  Attrs attrs;

  /// Default threads and units invented by ingestion carry synthetic=true.
  bool synthetic() const;

  bool operator==(const ProvNode&) const = default;
};

enum class RelationKind : std::uint8_t { SysCall, Spawn, UnitOf };

/// Edge label: a lowercase system call name, or one of the two hierarchy
/// links (process/thread creation and thread-to-unit containment).
class Relation {
 public:
  Relation() = default;

  static Relation syscall(std::string_view name);
  static Relation spawn() { return Relation(RelationKind::Spawn, {}); }
  static Relation unit_of() { return Relation(RelationKind::UnitOf, {}); }

  /// Inverse of to_string(): "Spawn", "UnitOf", or a syscall name.
  static Relation parse(std::string_view text);

  RelationKind kind() const noexcept { return kind_; }
  bool is_hierarchy() const noexcept { return kind_ != RelationKind::SysCall; }
  /// Syscall name; empty for hierarchy relations.
  const std::string& syscall_name() const noexcept { return name_; }

  auto operator<=>(const Relation&) const = default;

 private:
  Relation(RelationKind kind, std::string name)
      : kind_(kind), name_(std::move(name)) {}

  RelationKind kind_ = RelationKind::SysCall;
  std::string name_;
};

std::string to_string(const Relation& rel);

enum class FlowDirection : std::uint8_t { IntoSubject, OutOfSubject, Neutral };

std::string_view to_string(FlowDirection dir);

/// Information-flow orientation of a relation. Unknown syscalls are Neutral.
FlowDirection flow_direction(const Relation& rel);

/// How ingestion treats a (canonical) syscall name.
enum class SyscallRole : std::uint8_t {
  Causal,     ///< produces a subject/resource edge
  FdState,    ///< only mutates descriptor tables
  Lifecycle,  ///< process creation, exec and exit
  Unknown,
};

SyscallRole syscall_role(std::string_view canonical_name);

/// Folds variants onto one name (pread64 -> pread, openat -> open, ...).
std::string canonical_syscall(std::string_view name);

struct EventEdge {
  SignatureKey src;
  SignatureKey dst;
  Relation rel;
  std::vector<Timestamp> timestamps;  // ascending, never empty
  std::int64_t count = 1;
  Attrs attrs;

  Timestamp first() const { return timestamps.front(); }
  Timestamp last() const { return timestamps.back(); }

  bool operator==(const EventEdge&) const = default;
};

struct EdgeKey {
  SignatureKey src;
  SignatureKey dst;
  Relation rel;

  auto operator<=>(const EdgeKey&) const = default;
};

inline EdgeKey key_of(const EventEdge& e) { return {e.src, e.dst, e.rel}; }

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& key) const noexcept;
};

/// The small path built from one log record: at most parent process,
/// process, thread, execution unit and resource.
struct LineGraph {
  std::vector<ProvNode> nodes;
  std::vector<EventEdge> edges;
};

inline constexpr std::size_t kLineGraphMaxNodes = 5;
inline constexpr std::size_t kLineGraphMaxEdges = 4;

/// True when the graph honours the line-graph shape: size bounds, edges only
/// between member nodes, and the underlying undirected graph is a path.
bool is_well_formed(const LineGraph& lg);

enum class CompressionLevel : std::uint8_t { C0, C1, C2, C3 };

std::string_view to_string(CompressionLevel level);
std::optional<CompressionLevel> parse_compression_level(std::string_view text);

/// Mergeable node/edge container used for query results and session graphs.
struct ForensicGraph {
  std::map<SignatureKey, ProvNode> nodes;
  std::map<EdgeKey, EventEdge> edges;
  /// Investigation step that introduced each node; 0 for raw store contents.
  std::map<SignatureKey, int> step_of;

  bool empty() const { return nodes.empty() && edges.empty(); }

  /// Upsert: attrs unioned with first writer winning, step kept at minimum.
  void add_node(const ProvNode& node, int step = 0);
  /// Edges with an equal key are folded: timestamps merged, counts summed.
  void add_edge(const EventEdge& edge);

  bool operator==(const ForensicGraph&) const = default;
};

ForensicGraph merge_graphs(const ForensicGraph& a, const ForensicGraph& b);

/// Builds the identity key for a node of `kind` from raw attributes:
/// pid / tid / unit / inode+path / addr+port / pipe. Process, Thread and
/// ExecutionUnit keys take their epoch from "first_seen".
SignatureKey node_signature(NodeKind kind, const HostId& host, const Attrs& raw);

enum class TraceDirection : std::uint8_t { Back, Forward, Both };

/// Inclusive time range.
struct TimeWindow {
  Timestamp begin = kTimeMin;
  Timestamp end = kTimeMax;

  bool contains(Timestamp t) const { return t >= begin && t <= end; }
  bool operator==(const TimeWindow&) const = default;
};

/// "2019-09-03T12:00:00.000000Z" style rendering in UTC.
std::string format_iso8601(Timestamp ts);

/// The UTC period denoted by an ISO-8601 prefix ("2019", "2019-09-03",
/// "2019-09-03T12", ...). nullopt when the text is not such a prefix.
std::optional<TimeWindow> parse_date_prefix(std::string_view prefix);

}  // namespace graalf
