#include "graalf/engine.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>

namespace graalf {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<SignatureKey> sorted(const SigSet& s) {
  std::vector<SignatureKey> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

bool looser(Timestamp cand, Timestamp cur, TraceDirection dir) {
  return dir == TraceDirection::Back ? cand > cur : cand < cur;
}

using Loader = std::function<void(const std::vector<SignatureKey>&)>;

/// Layered label-correcting BFS. A node is re-expanded whenever a looser
/// reference time reaches it, so the result is the exact temporal closure
/// for the level's admission rule. `load` runs before each layer.
ForensicGraph traverse(const GraphIndex& g, const std::vector<SignatureKey>& seeds,
                       TraceDirection dir, Timestamp ref0,
                       const std::optional<std::string>& filter,
                       std::optional<std::size_t> depth_limit, const Loader& load,
                       QueryStats& st) {
  const bool back = dir == TraceDirection::Back;
  ForensicGraph out;
  std::unordered_map<SignatureKey, Timestamp, SignatureKeyHash> best;
  std::set<EdgeKey> taken;

  std::vector<SignatureKey> layer;
  for (const auto& s : seeds) {
    if (best.emplace(s, ref0).second) {
      out.add_node(*g.node(s));
      layer.push_back(s);
    }
  }

  std::size_t depth = 0;
  while (!layer.empty()) {
    if (depth_limit && depth >= *depth_limit) break;
    if (load) load(layer);
    std::vector<SignatureKey> next;
    SigSet in_next;
    for (const auto& n : layer) {
      ++st.frames;
      const Timestamp ref = best.at(n);
      for (const auto& u : sorted(back ? g.in_neighbors(n) : g.out_neighbors(n))) {
        const auto* edges = back ? g.edges_between(u, n) : g.edges_between(n, u);
        if (!edges) continue;
        std::optional<Timestamp> cand;
        for (const auto& e : *edges) {
          Admission a;
          if (e.rel.is_hierarchy()) {
            a = {true, ref};
          } else if (filter && e.rel.syscall_name() != *filter) {
            continue;
          } else {
            a = temporal_admit(e, ref, dir, g.level());
          }
          if (!a.admit) continue;
          if (!cand || looser(a.next_ref, *cand, dir)) cand = a.next_ref;
          if (taken.insert(key_of(e)).second) {
            for (const auto& p : *edges) {
              if (p.rel == e.rel) out.add_edge(p);
            }
          }
        }
        if (!cand) continue;
        auto it = best.find(u);
        if (it == best.end()) {
          out.add_node(*g.node(u));
          best.emplace(u, *cand);
        } else if (looser(*cand, it->second, dir)) {
          it->second = *cand;
        } else {
          continue;
        }
        if (in_next.insert(u).second) next.push_back(u);
      }
    }
    layer = std::move(next);
    ++depth;
  }
  st.visited = out.nodes.size();
  return out;
}

ForensicGraph select_only(const GraphIndex& g, const std::vector<SignatureKey>& seeds,
                          const std::optional<std::string>& filter) {
  ForensicGraph out;
  SigSet set(seeds.begin(), seeds.end());
  for (const auto& s : seeds) out.add_node(*g.node(s));
  for (const auto& e : g.select_edges(set, filter)) out.add_edge(e);
  return out;
}

Timestamp initial_ref(const QueryAst& ast) {
  const bool back = ast.direction == TraceDirection::Back;
  auto w = date_window(ast);
  if (!w) return back ? kTimeMax : kTimeMin;
  return back ? w->end : w->begin;
}

}  // namespace

Admission temporal_admit(const EventEdge& e, Timestamp ref, TraceDirection dir,
                         CompressionLevel level) {
  if (e.rel.is_hierarchy()) return {true, ref};
  const auto& ts = e.timestamps;
  if (dir == TraceDirection::Back) {
    switch (level) {
      case CompressionLevel::C0:
      case CompressionLevel::C1: {
        auto it = std::upper_bound(ts.begin(), ts.end(), ref);
        if (it == ts.begin()) return {false, 0};
        return {true, *std::prev(it)};
      }
      case CompressionLevel::C2:
        if (e.first() > ref) return {false, 0};
        return {true, std::min(e.last(), ref)};
      case CompressionLevel::C3:
        return {true, kTimeMax};
    }
  } else {
    switch (level) {
      case CompressionLevel::C0:
      case CompressionLevel::C1: {
        auto it = std::lower_bound(ts.begin(), ts.end(), ref);
        if (it == ts.end()) return {false, 0};
        return {true, *it};
      }
      case CompressionLevel::C2:
        if (e.last() < ref) return {false, 0};
        return {true, std::max(e.first(), ref)};
      case CompressionLevel::C3:
        return {true, kTimeMin};
    }
  }
  return {false, 0};
}

std::optional<TimeWindow> date_window(const QueryAst& ast) {
  std::optional<TimeWindow> w;
  for (const auto& c : ast.predicate) {
    if (c.field != CondField::Date) continue;
    auto p = parse_date_prefix(c.value);
    if (!p) {
      throw Error(ErrorCode::InvalidArgument, "date value '" + c.value +
                                                  "' is not an ISO-8601 date prefix");
    }
    if (!w) {
      w = p;
    } else {
      w->begin = std::max(w->begin, p->begin);
      w->end = std::min(w->end, p->end);
    }
  }
  return w;
}

std::optional<NodeCriteria> build_criteria(const QueryAst& ast) {
  NodeCriteria c;
  c.kind = ast.kind;
  c.edge_syscall = ast.edge_filter;
  c.active_during = date_window(ast);
  for (const auto& cond : ast.predicate) {
    switch (cond.field) {
      case CondField::Name:
        c.titles.emplace_back(cond.op, cond.value);
        break;
      case CondField::FileName:
        if (c.kind && *c.kind != NodeKind::File) return std::nullopt;
        c.kind = NodeKind::File;
        c.titles.emplace_back(cond.op, cond.value);
        break;
      case CondField::Pid:
        c.attrs.push_back({"pid", TextPredicate(cond.op, cond.value)});
        break;
      case CondField::Attr:
        c.attrs.push_back({cond.attr, TextPredicate(cond.op, cond.value)});
        break;
      case CondField::Date:
        break;
    }
  }
  if (c.active_during && c.active_during->begin > c.active_during->end) return std::nullopt;
  return c;
}

std::string_view to_string(RenderMode mode) {
  return mode == RenderMode::Verbose ? "verbose" : "normal";
}

Session::Session(std::string id) : id_(std::move(id)), last_used_(Clock::now()) {}

int Session::absorb(ForensicGraph& g) {
  std::lock_guard lock(mu_);
  const int step = ++step_;
  for (const auto& [sig, node] : g.nodes) cumulative_.add_node(node, step);
  for (const auto& [key, edge] : g.edges) cumulative_.edges[key] = edge;
  g.step_of.clear();
  for (const auto& [sig, node] : g.nodes) g.step_of[sig] = cumulative_.step_of.at(sig);
  last_used_ = Clock::now();
  return step;
}

ForensicGraph Session::graph() const {
  std::lock_guard lock(mu_);
  return cumulative_;
}

int Session::steps() const {
  std::lock_guard lock(mu_);
  return step_;
}

std::chrono::steady_clock::time_point Session::last_used() const {
  std::lock_guard lock(mu_);
  return last_used_;
}

QueryEngine::QueryEngine(const MemoryStore& store, BackendInterface* backend)
    : store_(store), backend_(backend) {}

QueryResult QueryEngine::execute(const QueryAst& ast, Session* session,
                                 const EngineConfig& cfg) const {
  const auto t0 = Clock::now();
  validate_ast(ast);
  QueryResult res;
  auto crit = build_criteria(ast);
  if (crit) {
    if (backend_ && store_.evicted_total() > 0) {
      try {
        res.graph = run_backend(ast, *crit, cfg, res.stats);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::BackendUnavailable && e.code() != ErrorCode::IoError) throw;
        res.stats.degraded = true;
        res.stats.warning = std::string("backend unavailable, memory-only answer: ") + e.what();
        res.graph = run_memory(ast, *crit, cfg, res.stats);
      }
    } else {
      res.graph = run_memory(ast, *crit, cfg, res.stats);
    }
  }
  if (session) {
    res.step = session->absorb(res.graph);
  } else {
    res.step = 1;
    for (const auto& [sig, node] : res.graph.nodes) res.graph.step_of[sig] = 1;
  }
  res.stats.total_ms = ms_since(t0);
  return res;
}

QueryResult QueryEngine::execute_text(std::string_view text, Session* session,
                                      const EngineConfig& cfg) const {
  auto stmt = parse_query(text);
  const auto* ast = std::get_if<QueryAst>(&stmt);
  if (!ast) {
    throw Error(ErrorCode::InvalidArgument, "configuration commands are not queries");
  }
  return execute(*ast, session, cfg);
}

ForensicGraph QueryEngine::run_memory(const QueryAst& ast, const NodeCriteria& crit,
                                      const EngineConfig& cfg, QueryStats& st) const {
  auto view = store_.read();
  const GraphIndex& g = *view;
  std::vector<SignatureKey> seeds;
  for (const auto* n : g.select_nodes(crit)) seeds.push_back(n->sig);
  st.seeds = seeds.size();
  const auto t0 = Clock::now();
  ForensicGraph out;
  if (!ast.direction) {
    out = select_only(g, seeds, ast.edge_filter);
    st.visited = out.nodes.size();
  } else {
    out = traverse(g, seeds, *ast.direction, initial_ref(ast), ast.edge_filter,
                   cfg.depth_limit, {}, st);
  }
  st.traversal_ms = ms_since(t0);
  return out;
}

ForensicGraph QueryEngine::run_backend(const QueryAst& ast, const NodeCriteria& crit,
                                       const EngineConfig& cfg, QueryStats& st) const {
  GraphIndex scratch(store_.config().level);
  ExpandSeen seen;
  SigSet loaded_both;
  SigSet loaded_dir;

  auto load = [&](const SigSet& frontier, TraceDirection dir) {
    if (frontier.empty()) return;
    ++st.backend_calls;
    for (const auto& lg : backend_->expand(frontier, dir, ast.edge_filter, seen)) {
      scratch.insert(lg);
    }
  };

  NodeCriteria undated = crit;
  undated.active_during.reset();
  ++st.backend_calls;
  SigSet candidates;
  for (const auto& n : backend_->select(undated)) candidates.insert(n.sig);
  // Candidates are loaded in both directions so the date window and the
  // select-only edge set are evaluated over complete incident edges.
  if (!candidates.empty()) {
    ++st.backend_calls;
    for (const auto& lg :
         backend_->expand(candidates, TraceDirection::Both, std::nullopt, seen)) {
      scratch.insert(lg);
    }
  }
  loaded_both = candidates;

  std::vector<SignatureKey> seeds;
  for (const auto* n : scratch.select_nodes(crit)) {
    if (candidates.count(n->sig)) seeds.push_back(n->sig);
  }
  st.seeds = seeds.size();

  const auto t0 = Clock::now();
  ForensicGraph out;
  if (!ast.direction) {
    out = select_only(scratch, seeds, ast.edge_filter);
    st.visited = out.nodes.size();
  } else {
    const TraceDirection dir = *ast.direction;
    Loader loader = [&](const std::vector<SignatureKey>& layer) {
      SigSet missing;
      for (const auto& s : layer) {
        if (!loaded_both.count(s) && loaded_dir.insert(s).second) missing.insert(s);
      }
      load(missing, dir);
    };
    out = traverse(scratch, seeds, dir, initial_ref(ast), ast.edge_filter, cfg.depth_limit,
                   loader, st);
  }
  st.traversal_ms = ms_since(t0);
  return out;
}

RenderedGraph render_graph(const ForensicGraph& g, RenderMode mode) {
  RenderedGraph out;
  auto step_of = [&](const SignatureKey& s) {
    auto it = g.step_of.find(s);
    return it == g.step_of.end() ? 0 : it->second;
  };

  if (mode == RenderMode::Verbose) {
    for (const auto& [sig, n] : g.nodes) out.nodes.push_back({sig, sig.kind, n.title, step_of(sig)});
    for (const auto& [key, e] : g.edges) {
      const std::string label = to_string(e.rel);
      for (std::int64_t i = 0; i < e.count; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const Timestamp ts = idx < e.timestamps.size() ? e.timestamps[idx] : e.first();
        out.edges.push_back({e.src, e.dst, label, e.rel, 1, ts});
      }
    }
    return out;
  }

  // Parent of each node along hierarchy edges inside the graph.
  std::map<SignatureKey, SignatureKey> parent;
  for (const auto& [key, e] : g.edges) {
    if (e.rel.is_hierarchy()) parent.emplace(e.dst, e.src);
  }
  auto rep = [&](const SignatureKey& s) {
    SignatureKey cur = s;
    for (std::size_t guard = 0; guard <= g.nodes.size(); ++guard) {
      auto n = g.nodes.find(cur);
      if (n == g.nodes.end() || !n->second.synthetic()) return cur;
      auto p = parent.find(cur);
      if (p == parent.end()) return cur;
      cur = p->second;
    }
    return s;
  };

  for (const auto& [sig, n] : g.nodes) {
    if (rep(sig) == sig) out.nodes.push_back({sig, sig.kind, n.title, step_of(sig)});
  }
  std::map<EdgeKey, RenderedEdge> merged;
  for (const auto& [key, e] : g.edges) {
    EdgeKey k{rep(e.src), rep(e.dst), e.rel};
    if (k.src == k.dst) continue;
    auto [it, fresh] = merged.try_emplace(k, RenderedEdge{k.src, k.dst, {}, e.rel, 0, e.first()});
    it->second.count += e.count;
    it->second.ts = std::min(it->second.ts, e.first());
  }
  for (auto& [k, re] : merged) {
    re.label = to_string(re.rel) + " ×" + std::to_string(re.count);
    out.edges.push_back(std::move(re));
  }
  return out;
}

}  // namespace graalf
