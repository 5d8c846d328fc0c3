#include "graalf/store.hpp"

#include <algorithm>
#include <cmath>

namespace graalf {

void StoreConfig::validate() const {
  if (!(evict_threshold > 0.0 && evict_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "evict_threshold must be in (0, 1]");
  }
}

EventEdge merge_edge(const EventEdge* existing, const EventEdge& incoming,
                     CompressionLevel level) {
  if (!existing) return incoming;
  if (key_of(*existing) != key_of(incoming)) {
    throw Error(ErrorCode::KeyMismatch, "merge_edge: (src, dst, rel) differ");
  }
  if (level == CompressionLevel::C0) return incoming;

  EventEdge out = *existing;
  out.count = existing->count + incoming.count;
  // Ties go to the existing edge so time-ordered input keeps the first arrival.
  const bool incoming_earlier = incoming.first() < existing->first();
  switch (level) {
    case CompressionLevel::C0:
      break;
    case CompressionLevel::C1: {
      std::vector<Timestamp> ts;
      ts.reserve(existing->timestamps.size() + incoming.timestamps.size());
      std::merge(existing->timestamps.begin(), existing->timestamps.end(),
                 incoming.timestamps.begin(), incoming.timestamps.end(),
                 std::back_inserter(ts));
      out.timestamps = std::move(ts);
      if (incoming_earlier) out.attrs = incoming.attrs;
      break;
    }
    case CompressionLevel::C2:
      out.timestamps = {std::min(existing->first(), incoming.first()),
                        std::max(existing->last(), incoming.last())};
      if (incoming_earlier) out.attrs = incoming.attrs;
      break;
    case CompressionLevel::C3:
      if (incoming_earlier) {
        out.timestamps = {incoming.first()};
        out.attrs = incoming.attrs;
      } else {
        out.timestamps = {existing->first()};
      }
      break;
  }
  return out;
}

namespace {

bool looks_like_regex(const std::string& v) {
  if (v.size() < 3 || v.front() != '/' || v.back() != '/') return false;
  return v.find_first_of("^$*+?()[]{}|\\", 1) < v.size() - 1;
}

}  // namespace

TextPredicate::TextPredicate(MatchOp op, std::string value)
    : op_(op), value_(std::move(value)) {
  if (op_ == MatchOp::Has && looks_like_regex(value_)) {
    try {
      regex_ = std::make_shared<const std::regex>(value_.substr(1, value_.size() - 2),
                                                  std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::InvalidArgument, "bad regular expression " + value_ + ": " + e.what());
    }
  }
}

bool TextPredicate::matches(std::string_view text) const {
  if (op_ == MatchOp::Is) return text == value_;
  if (regex_) return std::regex_search(text.begin(), text.end(), *regex_);
  return text.find(value_) != std::string_view::npos;
}

bool may_occur_in(const EventEdge& e, const TimeWindow& w, CompressionLevel level) {
  switch (level) {
    case CompressionLevel::C0:
    case CompressionLevel::C1: {
      auto it = std::lower_bound(e.timestamps.begin(), e.timestamps.end(), w.begin);
      return it != e.timestamps.end() && *it <= w.end;
    }
    case CompressionLevel::C2:
      return e.first() <= w.end && e.last() >= w.begin;
    case CompressionLevel::C3:
      // Only the first event is known; later merged events may be anywhere after it.
      if (e.count > 1) return e.first() <= w.end;
      return w.contains(e.first());
  }
  return false;
}

std::size_t SigPairHash::operator()(
    const std::pair<SignatureKey, SignatureKey>& p) const noexcept {
  SignatureKeyHash h;
  return h(p.first) * 1000003u ^ h(p.second);
}

// ---------------------------------------------------------------------------

GraphIndex::GraphIndex(CompressionLevel level) : level_(level) {}

std::uint64_t GraphIndex::node_bytes(const ProvNode& n) {
  std::uint64_t b = 96 + n.title.size() + n.sig.local_id.size() + n.sig.host.str().size();
  for (const auto& [k, v] : n.attrs) b += 32 + k.size() + v.size();
  return b;
}

std::uint64_t GraphIndex::edge_bytes(const EventEdge& e) {
  std::uint64_t b = 128 + 8 * e.timestamps.size() + e.rel.syscall_name().size();
  for (const auto& [k, v] : e.attrs) b += 32 + k.size() + v.size();
  return b;
}

void GraphIndex::touch(const SignatureKey& sig, Timestamp ts) {
  auto [it, inserted] = last_touched_.emplace(sig, ts);
  if (inserted) {
    age_order_.emplace(ts, sig);
  } else if (ts > it->second) {
    age_order_.erase({it->second, sig});
    it->second = ts;
    age_order_.emplace(ts, sig);
  }
}

bool GraphIndex::upsert_node(const ProvNode& node) {
  auto& bucket = by_type_[static_cast<std::size_t>(node.sig.kind)];
  auto [it, inserted] = bucket.emplace(node.sig, node);
  if (!inserted) {
    for (const auto& [k, v] : node.attrs) {
      if (it->second.attrs.emplace(k, v).second) usage_ += 32 + k.size() + v.size();
    }
    return false;
  }
  ++node_count_;
  usage_ += node_bytes(node);
  by_title_[node.title].insert(node.sig);
  touch(node.sig, node.sig.epoch);
  return true;
}

bool GraphIndex::add_edge(const EventEdge& edge) {
  auto& list = by_pair_[{edge.src, edge.dst}];
  auto same = std::find_if(list.begin(), list.end(),
                           [&](const EventEdge& e) { return e.rel == edge.rel; });
  bool created = false;
  if (same != list.end() && edge.rel.is_hierarchy()) {
    return false;
  }
  if (same == list.end() || level_ == CompressionLevel::C0) {
    list.push_back(edge);
    ++edge_count_;
    usage_ += edge_bytes(edge);
    created = true;
  } else {
    usage_ -= edge_bytes(*same);
    *same = merge_edge(&*same, edge, level_);
    usage_ += edge_bytes(*same);
  }
  out_adj_[edge.src].insert(edge.dst);
  in_adj_[edge.dst].insert(edge.src);
  touch(edge.src, edge.last());
  touch(edge.dst, edge.last());
  return created;
}

void GraphIndex::add_edge_raw(const EventEdge& edge) {
  by_pair_[{edge.src, edge.dst}].push_back(edge);
  ++edge_count_;
  usage_ += edge_bytes(edge);
  out_adj_[edge.src].insert(edge.dst);
  in_adj_[edge.dst].insert(edge.src);
  touch(edge.src, edge.last());
  touch(edge.dst, edge.last());
}

InsertReceipt GraphIndex::insert(const LineGraph& lg) {
  InsertReceipt r;
  for (const auto& n : lg.nodes) r.new_nodes += upsert_node(n) ? 1 : 0;
  for (const auto& e : lg.edges) {
    if (add_edge(e)) {
      ++r.new_edges;
    } else {
      ++r.merged_edges;
    }
  }
  return r;
}

const ProvNode* GraphIndex::node(const SignatureKey& sig) const {
  const auto& bucket = by_type_[static_cast<std::size_t>(sig.kind)];
  auto it = bucket.find(sig);
  return it == bucket.end() ? nullptr : &it->second;
}

namespace {

const SigSet kEmptySet;

}  // namespace

const SigSet& GraphIndex::out_neighbors(const SignatureKey& sig) const {
  auto it = out_adj_.find(sig);
  return it == out_adj_.end() ? kEmptySet : it->second;
}

const SigSet& GraphIndex::in_neighbors(const SignatureKey& sig) const {
  auto it = in_adj_.find(sig);
  return it == in_adj_.end() ? kEmptySet : it->second;
}

const std::vector<EventEdge>* GraphIndex::edges_between(const SignatureKey& src,
                                                        const SignatureKey& dst) const {
  auto it = by_pair_.find({src, dst});
  return it == by_pair_.end() ? nullptr : &it->second;
}

Timestamp GraphIndex::last_touched(const SignatureKey& sig) const {
  auto it = last_touched_.find(sig);
  return it == last_touched_.end() ? kTimeMin : it->second;
}

std::vector<const ProvNode*> GraphIndex::select_nodes(const NodeCriteria& c) const {
  auto accept = [&](const ProvNode& n) {
    if (c.kind && n.sig.kind != *c.kind) return false;
    for (const auto& t : c.titles) {
      if (!t.matches(n.title)) return false;
    }
    for (const auto& a : c.attrs) {
      auto it = n.attrs.find(a.key);
      if (it == n.attrs.end() || !a.pred.matches(it->second)) return false;
    }
    if (c.active_during) {
      auto hit = [&](const SignatureKey& a, const SignatureKey& b) {
        const auto* list = edges_between(a, b);
        if (!list) return false;
        for (const auto& e : *list) {
          if (e.rel.is_hierarchy()) continue;
          if (c.edge_syscall && e.rel.syscall_name() != *c.edge_syscall) continue;
          if (may_occur_in(e, *c.active_during, level_)) return true;
        }
        return false;
      };
      bool any = false;
      for (const auto& nb : out_neighbors(n.sig)) {
        if ((any = hit(n.sig, nb))) break;
      }
      if (!any) {
        for (const auto& nb : in_neighbors(n.sig)) {
          if ((any = hit(nb, n.sig))) break;
        }
      }
      if (!any) return false;
    }
    return true;
  };

  std::vector<const ProvNode*> out;
  if (c.kind) {
    for (const auto& [sig, n] : by_type_[static_cast<std::size_t>(*c.kind)]) {
      if (accept(n)) out.push_back(&n);
    }
  } else if (!c.titles.empty()) {
    // Start from the title map, as the kind is unconstrained.
    const auto& first = c.titles.front();
    auto visit_title = [&](const SigSet& sigs) {
      for (const auto& sig : sigs) {
        const ProvNode* n = node(sig);
        if (n && accept(*n)) out.push_back(n);
      }
    };
    if (first.op() == MatchOp::Is) {
      if (auto it = by_title_.find(first.value()); it != by_title_.end()) visit_title(it->second);
    } else {
      for (const auto& [title, sigs] : by_title_) {
        if (first.matches(title)) visit_title(sigs);
      }
    }
  } else {
    for (const auto& bucket : by_type_) {
      for (const auto& [sig, n] : bucket) {
        if (accept(n)) out.push_back(&n);
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ProvNode* a, const ProvNode* b) { return a->sig < b->sig; });
  return out;
}

std::vector<EventEdge> GraphIndex::select_edges(
    const SigSet& nodes, const std::optional<std::string>& syscall) const {
  std::vector<EventEdge> out;
  for (const auto& src : nodes) {
    for (const auto& dst : out_neighbors(src)) {
      if (!nodes.count(dst)) continue;
      for (const auto& e : *edges_between(src, dst)) {
        if (syscall && (e.rel.is_hierarchy() || e.rel.syscall_name() != *syscall)) continue;
        out.push_back(e);
      }
    }
  }
  return out;
}

void GraphIndex::for_each_node(const std::function<void(const ProvNode&)>& fn) const {
  for (const auto& bucket : by_type_) {
    for (const auto& [sig, n] : bucket) fn(n);
  }
}

void GraphIndex::for_each_edge(const std::function<void(const EventEdge&)>& fn) const {
  for (const auto& [pair, list] : by_pair_) {
    for (const auto& e : list) fn(e);
  }
}

ForensicGraph GraphIndex::to_graph() const {
  ForensicGraph g;
  for_each_node([&](const ProvNode& n) { g.add_node(n); });
  for_each_edge([&](const EventEdge& e) { g.add_edge(e); });
  return g;
}

void GraphIndex::remove_node(const SignatureKey& sig) {
  auto& bucket = by_type_[static_cast<std::size_t>(sig.kind)];
  auto it = bucket.find(sig);
  if (it == bucket.end()) return;

  auto drop_pair = [&](const SignatureKey& a, const SignatureKey& b) {
    auto p = by_pair_.find({a, b});
    if (p == by_pair_.end()) return;
    for (const auto& e : p->second) usage_ -= edge_bytes(e);
    edge_count_ -= p->second.size();
    by_pair_.erase(p);
  };
  if (auto out = out_adj_.find(sig); out != out_adj_.end()) {
    for (const auto& dst : out->second) {
      drop_pair(sig, dst);
      if (dst != sig) in_adj_[dst].erase(sig);
    }
    out_adj_.erase(out);
  }
  if (auto in = in_adj_.find(sig); in != in_adj_.end()) {
    for (const auto& src : in->second) {
      drop_pair(src, sig);
      if (src != sig) out_adj_[src].erase(sig);
    }
    in_adj_.erase(in);
  }
  if (auto t = by_title_.find(it->second.title); t != by_title_.end()) {
    t->second.erase(sig);
    if (t->second.empty()) by_title_.erase(t);
  }
  if (auto lt = last_touched_.find(sig); lt != last_touched_.end()) {
    age_order_.erase({lt->second, sig});
    last_touched_.erase(lt);
  }
  usage_ -= node_bytes(it->second);
  bucket.erase(it);
  --node_count_;
}

EvictReport GraphIndex::evict_oldest(
    std::uint64_t target_bytes, const std::function<bool(const SignatureKey&)>& pinned) {
  EvictReport report;
  if (usage_ <= target_bytes) return report;
  std::vector<SignatureKey> victims;
  // Walk oldest-first; removal mutates age_order_, so collect in batches.
  while (usage_ > target_bytes) {
    victims.clear();
    std::uint64_t projected = usage_;
    for (const auto& [ts, sig] : age_order_) {
      if (pinned && pinned(sig)) continue;
      victims.push_back(sig);
      projected -= std::min<std::uint64_t>(projected, node_bytes(*node(sig)));
      if (projected <= target_bytes) break;
    }
    if (victims.empty()) {
      throw Error(ErrorCode::CannotEvict, "every resident node is pinned by the insert queue");
    }
    for (const auto& sig : victims) {
      const std::size_t edges_before = edge_count_;
      remove_node(sig);
      report.evicted_edges += edges_before - edge_count_;
      ++report.evicted_nodes;
      report.evicted.push_back(sig);
      if (usage_ <= target_bytes) break;
    }
  }
  return report;
}

std::string GraphIndex::audit() const {
  std::size_t nodes = 0;
  for (std::size_t k = 0; k < by_type_.size(); ++k) {
    for (const auto& [sig, n] : by_type_[k]) {
      ++nodes;
      if (static_cast<std::size_t>(sig.kind) != k) return "node filed under wrong kind";
      auto t = by_title_.find(n.title);
      if (t == by_title_.end() || !t->second.count(sig)) {
        return "node missing from title index: " + to_string(sig);
      }
      if (!last_touched_.count(sig)) return "node without last-touched: " + to_string(sig);
    }
  }
  if (nodes != node_count_) return "node count mismatch";
  std::size_t titled = 0;
  for (const auto& [title, sigs] : by_title_) {
    for (const auto& sig : sigs) {
      ++titled;
      const ProvNode* n = node(sig);
      if (!n || n->title != title) return "stale title entry: " + title;
    }
  }
  if (titled != node_count_) return "title index size mismatch";
  std::size_t edges = 0;
  for (const auto& [pair, list] : by_pair_) {
    if (!node(pair.first) || !node(pair.second)) return "edge endpoint not resident";
    if (list.empty()) return "empty edge list retained";
    auto o = out_adj_.find(pair.first);
    auto i = in_adj_.find(pair.second);
    if (o == out_adj_.end() || !o->second.count(pair.second)) return "missing out-adjacency";
    if (i == in_adj_.end() || !i->second.count(pair.first)) return "missing in-adjacency";
    for (const auto& e : list) {
      ++edges;
      if (e.src != pair.first || e.dst != pair.second) return "edge filed under wrong pair";
    }
  }
  if (edges != edge_count_) return "edge count mismatch";
  for (const auto& [src, dsts] : out_adj_) {
    for (const auto& dst : dsts) {
      if (!by_pair_.count({src, dst})) return "dangling out-adjacency";
    }
  }
  for (const auto& [dst, srcs] : in_adj_) {
    for (const auto& src : srcs) {
      if (!by_pair_.count({src, dst})) return "dangling in-adjacency";
    }
  }
  if (age_order_.size() != last_touched_.size()) return "age order size mismatch";
  return {};
}

// ---------------------------------------------------------------------------

void InsertQueue::push(const LineGraph& lg) {
  Entry entry;
  entry.graph.edges = lg.edges;
  for (const auto& n : lg.nodes) {
    if (pending_nodes_.insert(n.sig).second) entry.graph.nodes.push_back(n);
    entry.pins.push_back(n.sig);
    ++pins_[n.sig];
  }
  queue_.push_back(std::move(entry));
}

std::optional<LineGraph> InsertQueue::pop() {
  if (queue_.empty()) return std::nullopt;
  Entry entry = std::move(queue_.front());
  queue_.pop_front();
  for (const auto& n : entry.graph.nodes) pending_nodes_.erase(n.sig);
  for (const auto& sig : entry.pins) {
    auto it = pins_.find(sig);
    if (it != pins_.end() && --it->second == 0) pins_.erase(it);
  }
  return std::move(entry.graph);
}

bool InsertQueue::pinned(const SignatureKey& sig) const { return pins_.count(sig) != 0; }

// ---------------------------------------------------------------------------

MemoryStore::MemoryStore(StoreConfig cfg) : index_(cfg.level), cfg_(cfg) { cfg_.validate(); }

MemoryStore::ReadView MemoryStore::read() const {
  return ReadView(std::shared_lock<std::shared_mutex>(mu_), &index_);
}

void MemoryStore::enqueue(const LineGraph& lg) {
  std::lock_guard<std::mutex> q(queue_mu_);
  queue_.push(lg);
}

std::size_t MemoryStore::pending() const {
  std::lock_guard<std::mutex> q(queue_mu_);
  return queue_.size();
}

std::size_t MemoryStore::drain(std::size_t max) {
  std::size_t n = 0;
  std::unique_lock<std::shared_mutex> w(mu_);
  while (n < max) {
    std::optional<LineGraph> lg;
    {
      std::lock_guard<std::mutex> q(queue_mu_);
      lg = queue_.pop();
    }
    if (!lg) break;
    insert_locked(*lg);
    ++n;
  }
  return n;
}

InsertReceipt MemoryStore::insert(const LineGraph& lg) {
  std::unique_lock<std::shared_mutex> w(mu_);
  return insert_locked(lg);
}

InsertReceipt MemoryStore::insert_locked(const LineGraph& lg) {
  auto r = index_.insert(lg);
  version_.fetch_add(1);
  if (cfg_.memory_limit_bytes > 0 &&
      static_cast<double>(index_.usage_bytes()) >
          cfg_.evict_threshold * static_cast<double>(cfg_.memory_limit_bytes)) {
    try {
      evict_locked();
    } catch (const Error&) {
      // Everything resident is pinned; retry after the queue drains.
    }
  }
  return r;
}

EvictReport MemoryStore::evict_locked() {
  const auto target = static_cast<std::uint64_t>(
      std::floor(cfg_.evict_threshold * static_cast<double>(cfg_.memory_limit_bytes)));
  auto report = index_.evict_oldest(target, [this](const SignatureKey& sig) {
    std::lock_guard<std::mutex> q(queue_mu_);
    return queue_.pinned(sig);
  });
  evicted_total_.fetch_add(report.evicted_nodes);
  if (report.evicted_nodes) version_.fetch_add(1);
  return report;
}

EvictReport MemoryStore::evict_if_needed() {
  std::unique_lock<std::shared_mutex> w(mu_);
  if (cfg_.memory_limit_bytes == 0) return {};
  return evict_locked();
}

StoreConfig MemoryStore::config() const {
  std::shared_lock<std::shared_mutex> r(mu_);
  return cfg_;
}

void MemoryStore::set_config(const StoreConfig& cfg) {
  cfg.validate();
  std::unique_lock<std::shared_mutex> w(mu_);
  cfg_ = cfg;
  index_.set_level(cfg.level);
}

void MemoryStore::replace(GraphIndex index) {
  std::unique_lock<std::shared_mutex> w(mu_);
  index_ = std::move(index);
  index_.set_level(cfg_.level);
  version_.fetch_add(1);
}

}  // namespace graalf
