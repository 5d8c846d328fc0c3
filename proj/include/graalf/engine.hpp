/**
 * @file engine.hpp
 * @brief Query execution: seed selection, temporal BFS and rendering.
 *
 * Queries run against a read view of the MemoryStore. Once the store has
 * evicted anything, a query is answered from the journal instead: seeds and
 * frontier layers are pulled into a per-query scratch index with one backend
 * scan per BFS layer.
 */
#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "graalf/backend.hpp"
#include "graalf/model.hpp"
#include "graalf/query.hpp"
#include "graalf/store.hpp"

namespace graalf {

struct Admission {
  bool admit = false;
  Timestamp next_ref = 0;
};

/// Whether `e` may carry influence to a frame with reference time `ref`, and
/// the reference time of the frame it produces.
Admission temporal_admit(const EventEdge& e, Timestamp ref, TraceDirection dir,
                         CompressionLevel level);

/// Seed criteria for `ast`. nullopt when the conditions cannot match anything
/// (e.g. `file name` under `from soc`). Throws InvalidArgument for a date
/// value that is not an ISO-8601 prefix.
std::optional<NodeCriteria> build_criteria(const QueryAst& ast);

/// Inclusive intersection of every date condition, if any.
std::optional<TimeWindow> date_window(const QueryAst& ast);

enum class RenderMode { Normal, Verbose };

std::string_view to_string(RenderMode mode);

struct EngineConfig {
  std::optional<std::size_t> depth_limit;
  RenderMode mode = RenderMode::Normal;
};

struct QueryStats {
  std::size_t seeds = 0;
  std::size_t visited = 0;
  std::size_t frames = 0;
  std::size_t backend_calls = 0;
  double traversal_ms = 0;
  double total_ms = 0;
  bool degraded = false;
  std::string warning;
};

struct QueryResult {
  ForensicGraph graph;
  int step = 0;
  QueryStats stats;
};

/// An analyst's investigation: numbers queries 1, 2, ... and accumulates
/// their results. Thread-safe.
class Session {
 public:
  explicit Session(std::string id = {});

  const std::string& id() const noexcept { return id_; }

  /// Allocates the next step and folds `g` into the cumulative graph. Nodes
  /// already known keep their earlier step; `g.step_of` is rewritten to the
  /// session's view.
  int absorb(ForensicGraph& g);

  ForensicGraph graph() const;
  int steps() const;
  std::chrono::steady_clock::time_point last_used() const;

 private:
  std::string id_;
  mutable std::mutex mu_;
  int step_ = 0;
  ForensicGraph cumulative_;
  std::chrono::steady_clock::time_point last_used_;
};

class QueryEngine {
 public:
  /// `backend` may be null, in which case evicted data is unreachable.
  explicit QueryEngine(const MemoryStore& store, BackendInterface* backend = nullptr);

  /// Validates and runs `ast`. With a session, the result carries the
  /// session's step numbering; without one every node gets step 1.
  /// Throws EmptyCriteria, InvalidArgument.
  QueryResult execute(const QueryAst& ast, Session* session = nullptr,
                      const EngineConfig& cfg = {}) const;

  /// Parses, rejects config commands, and executes.
  QueryResult execute_text(std::string_view text, Session* session = nullptr,
                           const EngineConfig& cfg = {}) const;

 private:
  ForensicGraph run_memory(const QueryAst& ast, const NodeCriteria& crit,
                           const EngineConfig& cfg, QueryStats& st) const;
  ForensicGraph run_backend(const QueryAst& ast, const NodeCriteria& crit,
                            const EngineConfig& cfg, QueryStats& st) const;

  const MemoryStore& store_;
  BackendInterface* backend_;
};

struct RenderedNode {
  SignatureKey sig;
  NodeKind kind = NodeKind::Process;
  std::string title;
  int step = 0;
};

struct RenderedEdge {
  SignatureKey src;
  SignatureKey dst;
  std::string label;
  Relation rel;
  std::int64_t count = 1;
  Timestamp ts = 0;  // first timestamp of the display edge
};

struct RenderedGraph {
  std::vector<RenderedNode> nodes;
  std::vector<RenderedEdge> edges;
};

/// Verbose: one display edge per represented event, padding collapsed edges
/// with their first timestamp. Normal: one display edge per (src, dst, rel)
/// labelled "rel ×count", with synthetic threads and units folded into their
/// nearest non-synthetic hierarchy ancestor.
RenderedGraph render_graph(const ForensicGraph& g, RenderMode mode);

}  // namespace graalf
