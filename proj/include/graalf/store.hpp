/**
 * @file store.hpp
 * @brief In-memory provenance graph with compression, insertion queue and
 *        memory-bounded eviction.
 *
 * GraphIndex is the unsynchronized data structure; MemoryStore wraps it with
 * a reader/writer lock, the pending-insert queue and the eviction policy.
 * Queries take a ReadView, which pins a consistent snapshot for their
 * duration.
 */
#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "graalf/model.hpp"

namespace graalf {

struct StoreConfig {
  CompressionLevel level = CompressionLevel::C1;
  std::uint64_t memory_limit_bytes = 0;  // 0 disables eviction
  double evict_threshold = 0.9;

  /// Throws InvalidConfig.
  void validate() const;
};

struct InsertReceipt {
  std::size_t new_nodes = 0;
  std::size_t new_edges = 0;
  std::size_t merged_edges = 0;
};

/// Folds `incoming` into `existing` under `level`. With no existing edge the
/// incoming one is returned verbatim. C0 never merges; callers append.
/// Throws KeyMismatch when the (src, dst, rel) keys differ.
EventEdge merge_edge(const EventEdge* existing, const EventEdge& incoming,
                     CompressionLevel level);

enum class MatchOp { Is, Has };

/// Exact or substring match. A Has value written as /.../ and containing a
/// regex metacharacter is matched as an ECMAScript regular expression.
class TextPredicate {
 public:
  TextPredicate(MatchOp op, std::string value);

  bool matches(std::string_view text) const;
  MatchOp op() const noexcept { return op_; }
  const std::string& value() const noexcept { return value_; }
  bool is_regex() const noexcept { return regex_ != nullptr; }

 private:
  MatchOp op_;
  std::string value_;
  std::shared_ptr<const std::regex> regex_;
};

struct AttrCondition {
  std::string key;
  TextPredicate pred;
};

struct NodeCriteria {
  std::optional<NodeKind> kind;
  std::vector<TextPredicate> titles;  // all must hold
  std::vector<AttrCondition> attrs;   // all must hold
  /// Node must have an incident syscall edge that may have occurred inside
  /// this window (exact at C0/C1, interval overlap at C2, first <= end at C3).
  std::optional<TimeWindow> active_during;
  /// Restricts the edges considered by active_during to one syscall.
  std::optional<std::string> edge_syscall;

  bool empty() const {
    return !kind && titles.empty() && attrs.empty() && !active_during;
  }
};

/// True when some timestamp represented by `e` may lie in `w` at `level`.
bool may_occur_in(const EventEdge& e, const TimeWindow& w, CompressionLevel level);

struct EvictReport {
  std::size_t evicted_nodes = 0;
  std::size_t evicted_edges = 0;
  std::vector<SignatureKey> evicted;
};

struct SigPairHash {
  std::size_t operator()(const std::pair<SignatureKey, SignatureKey>& p) const noexcept;
};

using SigSet = std::unordered_set<SignatureKey, SignatureKeyHash>;

/// Unsynchronized graph storage: nodes by kind, edges by ordered endpoint
/// pair, titles, plus derived in/out adjacency and last-touched times.
class GraphIndex {
 public:
  explicit GraphIndex(CompressionLevel level = CompressionLevel::C1);

  CompressionLevel level() const noexcept { return level_; }
  void set_level(CompressionLevel level) noexcept { level_ = level; }

  InsertReceipt insert(const LineGraph& lg);
  /// Returns true when the node is new. Attributes are unioned.
  bool upsert_node(const ProvNode& node);
  /// Folds per level; hierarchy edges are idempotent. Endpoints must exist.
  /// Returns true when a new edge record was created.
  bool add_edge(const EventEdge& edge);
  /// Appends without merging; used to restore snapshots verbatim.
  void add_edge_raw(const EventEdge& edge);

  const ProvNode* node(const SignatureKey& sig) const;
  bool contains(const SignatureKey& sig) const { return node(sig) != nullptr; }

  std::vector<const ProvNode*> select_nodes(const NodeCriteria& c) const;
  /// Edges between members of `nodes`, optionally restricted to one syscall
  /// (hierarchy edges are dropped when a syscall filter is given).
  std::vector<EventEdge> select_edges(const SigSet& nodes,
                                      const std::optional<std::string>& syscall) const;
  const std::vector<EventEdge>* edges_between(const SignatureKey& src,
                                              const SignatureKey& dst) const;
  const SigSet& out_neighbors(const SignatureKey& sig) const;
  const SigSet& in_neighbors(const SignatureKey& sig) const;
  Timestamp last_touched(const SignatureKey& sig) const;

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t edge_count() const noexcept { return edge_count_; }
  std::uint64_t usage_bytes() const noexcept { return usage_; }

  void for_each_node(const std::function<void(const ProvNode&)>& fn) const;
  void for_each_edge(const std::function<void(const EventEdge&)>& fn) const;
  /// Whole contents folded into a ForensicGraph (parallel C0 edges merge).
  ForensicGraph to_graph() const;

  /// Removes the node and its incident edges.
  void remove_node(const SignatureKey& sig);

  /// Removes least-recently-touched nodes until usage <= target_bytes.
  /// `pinned` nodes are exempt; throws CannotEvict when every resident node
  /// is pinned and usage is still above target.
  EvictReport evict_oldest(std::uint64_t target_bytes,
                           const std::function<bool(const SignatureKey&)>& pinned);

  /// Full consistency audit of the derived indexes; returns a description of
  /// the first problem found, or an empty string.
  std::string audit() const;

 private:
  using Pair = std::pair<SignatureKey, SignatureKey>;

  void touch(const SignatureKey& sig, Timestamp ts);
  static std::uint64_t node_bytes(const ProvNode& n);
  static std::uint64_t edge_bytes(const EventEdge& e);

  CompressionLevel level_;
  std::array<std::unordered_map<SignatureKey, ProvNode, SignatureKeyHash>, kNodeKindCount>
      by_type_;
  std::unordered_map<Pair, std::vector<EventEdge>, SigPairHash> by_pair_;
  std::unordered_map<std::string, SigSet> by_title_;
  std::unordered_map<SignatureKey, SigSet, SignatureKeyHash> out_adj_;
  std::unordered_map<SignatureKey, SigSet, SignatureKeyHash> in_adj_;
  std::unordered_map<SignatureKey, Timestamp, SignatureKeyHash> last_touched_;
  std::set<std::pair<Timestamp, SignatureKey>> age_order_;
  std::size_t node_count_ = 0;
  std::size_t edge_count_ = 0;
  std::uint64_t usage_ = 0;
};

/// FIFO of pending line graphs. A node signature already waiting in the
/// queue is not enqueued again; every referenced signature stays pinned until
/// its entry is drained.
class InsertQueue {
 public:
  void push(const LineGraph& lg);
  /// Removes the oldest entry and releases its pins.
  std::optional<LineGraph> pop();

  bool pinned(const SignatureKey& sig) const;
  std::size_t size() const noexcept { return queue_.size(); }
  std::size_t pending_node_count() const noexcept { return pending_nodes_.size(); }

 private:
  struct Entry {
    LineGraph graph;  // nodes deduplicated against pending_nodes_
    std::vector<SignatureKey> pins;
  };
  std::deque<Entry> queue_;
  SigSet pending_nodes_;
  std::unordered_map<SignatureKey, int, SignatureKeyHash> pins_;
};

class MemoryStore {
 public:
  explicit MemoryStore(StoreConfig cfg = {});

  /// Consistent read access; holds a shared lock until destroyed.
  class ReadView {
   public:
    const GraphIndex& operator*() const { return *index_; }
    const GraphIndex* operator->() const { return index_; }

   private:
    friend class MemoryStore;
    ReadView(std::shared_lock<std::shared_mutex> lock, const GraphIndex* index)
        : lock_(std::move(lock)), index_(index) {}
    std::shared_lock<std::shared_mutex> lock_;
    const GraphIndex* index_;
  };

  ReadView read() const;

  /// Thread-safe; the graph becomes visible after drain().
  void enqueue(const LineGraph& lg);
  /// Inserts up to `max` pending graphs, evicting when over the threshold.
  std::size_t drain(std::size_t max = SIZE_MAX);
  /// enqueue + drain of a single graph.
  InsertReceipt insert(const LineGraph& lg);
  std::size_t pending() const;

  StoreConfig config() const;
  /// A level change affects subsequent merges only.
  void set_config(const StoreConfig& cfg);

  /// Runs eviction now if usage exceeds the threshold.
  EvictReport evict_if_needed();
  std::uint64_t evicted_total() const noexcept { return evicted_total_.load(); }
  /// Incremented on every mutation.
  std::uint64_t version() const noexcept { return version_.load(); }

  /// Replaces the contents (snapshot import).
  void replace(GraphIndex index);

 private:
  InsertReceipt insert_locked(const LineGraph& lg);
  EvictReport evict_locked();

  mutable std::shared_mutex mu_;
  GraphIndex index_;
  StoreConfig cfg_;
  mutable std::mutex queue_mu_;
  InsertQueue queue_;
  std::atomic<std::uint64_t> evicted_total_{0};
  std::atomic<std::uint64_t> version_{0};
};

}  // namespace graalf
