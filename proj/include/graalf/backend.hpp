/**
 * @file backend.hpp
 * @brief Durable storage: the flat event journal and the two-table
 *        vertex/edge snapshot.
 *
 * The journal keeps one row per causal or lifecycle record in arrival order
 * and is the uncompressed source of truth. Reads replay it through an
 * EventProcessor, so graphs reconstructed from disk carry the same node
 * identities as the ones built during live ingestion.
 */
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include "graalf/ingest.hpp"
#include "graalf/store.hpp"

namespace graalf {

struct FlatJournalRow {
  std::string host;
  Timestamp ts = 0;
  std::string syscall;
  std::string pid;
  std::string pname;
  std::string ppid;
  std::string ppname;
  std::string ancestor_pid;
  std::string ancestor_name;
  std::string tid;
  std::string unit_id;
  std::string fd_kind;
  std::string fd_title;
  std::string fd_inode;
  std::string args;
  std::string retval;

  bool operator==(const FlatJournalRow&) const = default;
};

FlatJournalRow to_row(const EventRecord& rec);
EventRecord from_row(const FlatJournalRow& row);

/// Column names in file order.
const std::vector<std::string>& journal_columns();
std::string encode_row(const FlatJournalRow& row);
/// Throws MalformedRecord.
FlatJournalRow decode_row(std::string_view line);

/// Backslash escaping of tab, newline, carriage return and backslash.
std::string tsv_escape(std::string_view s);
std::string tsv_unescape(std::string_view s);
/// "k=v;k=v" with '=', ';' and '\' escaped inside keys and values.
std::string encode_attrs(const Attrs& attrs);
Attrs decode_attrs(std::string_view s);

struct BackendStats {
  std::uint64_t rows = 0;
  std::uint64_t scans = 0;
  std::uint64_t appended = 0;
};

/// Row offsets already delivered during one traversal.
using ExpandSeen = std::unordered_set<std::uint64_t>;

class BackendInterface {
 public:
  virtual ~BackendInterface() = default;

  virtual void append(const EventRecord& rec) = 0;
  virtual void flush() = 0;
  /// Nodes matching `criteria` (the date window is ignored). Throws
  /// EmptyCriteria for empty criteria.
  virtual std::vector<ProvNode> select(const NodeCriteria& criteria) = 0;
  /// One scan resolving the whole frontier: line graphs of stored rows with
  /// an edge entering (Back), leaving (Forward) or touching (Both) a frontier
  /// node. The syscall filter applies to syscall edges only. Rows already in
  /// `seen` are suppressed; delivered rows are added to it.
  virtual std::vector<LineGraph> expand(const SigSet& frontier, TraceDirection dir,
                                        const std::optional<std::string>& syscall,
                                        ExpandSeen& seen) = 0;
  virtual std::vector<EventRecord> scan_range(const TimeWindow& window) = 0;
  virtual BackendStats stats() const = 0;
};

/// Journal stored as DIR/journal.tsv.
class JournalBackend : public BackendInterface {
 public:
  /// Opens or creates the journal. Throws IoError.
  explicit JournalBackend(std::filesystem::path dir);

  void append(const EventRecord& rec) override;
  void flush() override;
  std::vector<ProvNode> select(const NodeCriteria& criteria) override;
  std::vector<LineGraph> expand(const SigSet& frontier, TraceDirection dir,
                                const std::optional<std::string>& syscall,
                                ExpandSeen& seen) override;
  std::vector<EventRecord> scan_range(const TimeWindow& window) override;
  BackendStats stats() const override;

  const std::filesystem::path& path() const noexcept { return file_; }

 private:
  /// Replays every flushed row, calling fn(offset, record, graph-or-null).
  template <typename Fn>
  void replay(Fn&& fn) const;

  std::filesystem::path file_;
  std::ofstream out_;
  mutable std::shared_mutex mu_;
  std::vector<FlatJournalRow> rows_;
  std::mutex pending_mu_;
  std::vector<FlatJournalRow> pending_;
  mutable std::atomic<std::uint64_t> scans_{0};
  std::atomic<std::uint64_t> appended_{0};
};

struct SnapshotReport {
  std::size_t vertex_rows = 0;
  std::size_t edge_rows = 0;
};

/// Writes DIR/vertices.tsv and DIR/edges.tsv in a deterministic order.
SnapshotReport snapshot_two_table(const GraphIndex& index, const std::filesystem::path& dir);
/// Restores a snapshot verbatim; `level` governs later merges only.
GraphIndex load_two_table(const std::filesystem::path& dir, CompressionLevel level);

}  // namespace graalf
