/**
 * @file ingest.hpp
 * @brief Log parsing (audit, Sysdig, CSV) and conversion of records into
 *        line graphs.
 *
 * Parsers turn text into EventRecords. EventProcessor owns the per-host
 * state tables and turns each record into at most one LineGraph; the same
 * processor is used for live ingestion and for journal replay, which is what
 * makes both paths produce identical nodes.
 */
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "graalf/model.hpp"

namespace graalf {

struct ResourceRef {
  NodeKind kind = NodeKind::File;  // File, Socket or Pipe
  std::string path_or_endpoint;
  std::optional<std::string> inode;

  bool operator==(const ResourceRef&) const = default;
};

struct EventRecord {
  HostId host;
  Timestamp ts = 0;
  std::string syscall;  // canonical name
  std::optional<std::int64_t> pid;
  std::optional<std::int64_t> ppid;
  std::optional<std::int64_t> ancestor_pid;
  std::optional<std::int64_t> tid;
  std::optional<std::string> unit_id;
  std::string comm;
  std::string exe;
  std::string pcomm;
  std::string ancestor_name;
  std::optional<int> fd;
  std::optional<ResourceRef> resource;
  std::optional<std::string> args;
  std::optional<std::string> retval;

  bool operator==(const EventRecord&) const = default;
};

/// Title and identity attributes for a resource, as used by build_line_graph.
ProvNode resource_node(const HostId& host, const ResourceRef& ref);

/// Infers a resource from a descriptor name as printed by Sysdig:
/// "a->b" and "ip:port" are sockets, "pipe:[n]" is a pipe, "/..." a file.
std::optional<ResourceRef> infer_resource(std::string_view fd_name,
                                          std::string_view fd_kind = {});

struct ProcessEntry {
  ProvNode node;
  bool emitted = false;
};

struct UnitState {
  std::string current;             // current unit id; empty for the default
  std::vector<std::string> deps;   // memory dependencies announced for it
};

/// Per-host tables. Confined to one ingestion worker.
struct HostState {
  HostId host;
  std::map<std::pair<std::int64_t, int>, ResourceRef> fd_table;
  std::unordered_map<std::int64_t, UnitState> unit_table;
  std::unordered_map<std::int64_t, ProcessEntry> proc_table;
  /// Thread and unit nodes keyed by local id, with the owning pid for GC.
  std::unordered_map<std::string, std::pair<std::int64_t, ProvNode>> subjects;
  /// Creation time of children announced by fork/clone before they run.
  std::unordered_map<std::int64_t, Timestamp> pending_children;

  explicit HostState(HostId h = HostId()) : host(std::move(h)) {}

  /// Drops everything keyed on `pid`: fds, threads, units and the process.
  void forget_process(std::int64_t pid);
};

/// Converts one causal or lifecycle record into its line graph and updates
/// `state`. Throws Error{EmptyRecord} when neither pid nor resource is set.
LineGraph build_line_graph(const EventRecord& rec, HostState& state);

enum class ParseStatus { Event, StateOnly, Skip };

struct ParseOutcome {
  ParseStatus status = ParseStatus::Skip;
  std::optional<EventRecord> record;
  std::string warning;  // set for malformed input
};

/// Reassembles multi-line audit events (SYSCALL, PATH, CWD, SOCKADDR, ...)
/// by serial number and resolves descriptors through `state.fd_table`.
class AuditParser {
 public:
  explicit AuditParser(HostState& state, Timestamp window_us = 2'000'000);

  /// Consumes one log line; returns outcomes for every event it completed.
  std::vector<ParseOutcome> feed(std::string_view line);
  /// Completes every buffered event.
  std::vector<ParseOutcome> finish();

 private:
  struct Pending;
  ParseOutcome complete(Pending& ev);
  void flush_before(std::uint64_t serial, Timestamp now,
                    std::vector<ParseOutcome>& out);

  HostState& state_;
  Timestamp window_;
  std::map<std::uint64_t, std::shared_ptr<Pending>> pending_;
};

enum class SysdigFormat { Json, Plain };

/// Literal/field layout of a Sysdig `-p` capture format string such as
/// "%evt.rawtime %evt.type %proc.pid %proc.name %fd.name".
class SysdigLayout {
 public:
  static SysdigLayout parse(std::string_view format);

  /// Splits a plain line into field name/value pairs.
  std::optional<std::vector<std::pair<std::string, std::string>>> split(
      std::string_view line) const;

  const std::vector<std::string>& fields() const noexcept { return fields_; }

 private:
  std::string lead_;
  std::vector<std::string> fields_;
  std::vector<std::string> seps_;  // separator following each field but the last
};

ParseOutcome parse_sysdig_line(std::string_view line, SysdigFormat format,
                               const SysdigLayout* layout, const HostId& host);

class CsvHeaderSpec {
 public:
  /// Validates names against the record vocabulary. Throws UnknownHeaderField
  /// or InvalidArgument when ts, syscall, or pid/resource are missing.
  explicit CsvHeaderSpec(std::vector<std::string> columns);
  static CsvHeaderSpec from_header_line(std::string_view line);

  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

/// RFC-4180 field splitting of one CSV line.
std::vector<std::string> split_csv(std::string_view line);

/// Throws ColumnCountMismatch or TypeError.
EventRecord parse_csv_record(const CsvHeaderSpec& spec, std::string_view line,
                             const HostId& host);

/// Applies one vocabulary field (with aliases, e.g. proc.pid) to `rec`.
/// Returns false for names outside the vocabulary. Throws TypeError on bad
/// numerics. Resource fields are gathered in `res_fields` for later inference.
bool apply_record_field(EventRecord& rec, std::string_view name,
                        std::string_view value,
                        std::map<std::string, std::string>& res_fields);

/// Finalizes a record assembled through apply_record_field.
void finish_record(EventRecord& rec, const std::map<std::string, std::string>& res_fields);

/// Receives the output of ingestion: every causal and lifecycle record, with
/// its line graph when one was produced.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void on_record(const EventRecord& rec, const LineGraph* lg) = 0;
};

/// Classifies records and drives build_line_graph over one HostState per host.
class EventProcessor {
 public:
  enum class Kind { Graph, Lifecycle, StateOnly, Skipped };

  struct Result {
    Kind kind = Kind::Skipped;
    std::optional<LineGraph> graph;
  };

  Result process(const EventRecord& rec);
  HostState& state(const HostId& host);

  std::int64_t unknown_syscalls() const noexcept { return unknown_; }

 private:
  std::map<HostId, HostState> hosts_;
  std::int64_t unknown_ = 0;
};

struct IngestStats {
  std::int64_t parsed = 0;
  std::int64_t state_only = 0;
  std::int64_t skipped = 0;
  std::int64_t emitted_nodes = 0;
  std::int64_t emitted_edges = 0;
  std::vector<double> latency_us;  // per-record, capped at kMaxLatencySamples

  static constexpr std::size_t kMaxLatencySamples = 1 << 20;
};

enum class LogFormat { Audit, SysdigJson, SysdigPlain, Csv };

std::optional<LogFormat> parse_log_format(std::string_view text);

struct IngestOptions {
  LogFormat format = LogFormat::Audit;
  HostId host;
  std::string sysdig_format;           // plain Sysdig capture format
  std::optional<CsvHeaderSpec> header; // else taken from the first CSV line
};

/// Incremental line feeder shared by batch, follow and server ingestion.
class LineIngestor {
 public:
  LineIngestor(IngestOptions opts, EventProcessor& processor, RecordSink& sink);
  ~LineIngestor();

  void feed(std::string_view line);
  /// Flushes parser buffers (audit reassembly).
  void finish();

  const IngestStats& stats() const noexcept { return stats_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  void handle(ParseOutcome&& outcome, double parse_us);

  IngestOptions opts_;
  EventProcessor& processor_;
  RecordSink& sink_;
  std::unique_ptr<AuditParser> audit_;
  std::optional<SysdigLayout> layout_;
  IngestStats stats_;
  std::vector<std::string> warnings_;
};

/// Reads `in` to EOF through a LineIngestor. Per-record errors are counted.
IngestStats ingest_stream(std::istream& in, const IngestOptions& opts,
                          EventProcessor& processor, RecordSink& sink);

}  // namespace graalf
