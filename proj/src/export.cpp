#include "graalf/export.hpp"

#include <fstream>
#include <sstream>

namespace graalf {

using nlohmann::json;

namespace {

std::string dot_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

std::string_view shape(NodeKind k) {
  switch (k) {
    case NodeKind::Process: return "box";
    case NodeKind::Thread: return "ellipse";
    case NodeKind::ExecutionUnit: return "oval";
    case NodeKind::File: return "note";
    case NodeKind::Socket: return "diamond";
    case NodeKind::Pipe: return "hexagon";
  }
  return "ellipse";
}

}  // namespace

std::optional<ExportFormat> parse_export_format(std::string_view text) {
  if (text == "dot") return ExportFormat::Dot;
  if (text == "json") return ExportFormat::Json;
  return std::nullopt;
}

std::string_view step_color(int step) {
  static constexpr std::string_view palette[] = {"red", "white", "gray", "cyan", "green"};
  if (step < 1) return "white";
  return palette[(step - 1) % 5];
}

json sig_to_json(const SignatureKey& sig) {
  return {{"host", sig.host.str()},
          {"kind", std::string(to_string(sig.kind))},
          {"id", sig.local_id},
          {"epoch", sig.epoch}};
}

SignatureKey sig_from_json(const json& j) {
  try {
    auto kind = parse_node_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown node kind");
    return {HostId(j.at("host").get<std::string>()), *kind, j.at("id").get<std::string>(),
            j.at("epoch").get<Timestamp>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad signature: ") + e.what());
  }
}

json graph_to_json(const ForensicGraph& g) {
  json nodes = json::array();
  for (const auto& [sig, n] : g.nodes) {
    auto step = g.step_of.find(sig);
    json attrs = json::object();
    for (const auto& [k, v] : n.attrs) attrs[k] = v;
    nodes.push_back({{"sig", sig_to_json(sig)},
                     {"kind", std::string(to_string(sig.kind))},
                     {"title", n.title},
                     {"step", step == g.step_of.end() ? 0 : step->second},
                     {"attrs", attrs}});
  }
  json edges = json::array();
  for (const auto& [key, e] : g.edges) {
    json attrs = json::object();
    for (const auto& [k, v] : e.attrs) attrs[k] = v;
    edges.push_back({{"src", sig_to_json(e.src)},
                     {"dst", sig_to_json(e.dst)},
                     {"rel", to_string(e.rel)},
                     {"count", e.count},
                     {"timestamps", e.timestamps},
                     {"attrs", attrs}});
  }
  return {{"nodes", nodes}, {"edges", edges}};
}

ForensicGraph graph_from_json(const json& j) {
  ForensicGraph g;
  try {
    for (const auto& jn : j.at("nodes")) {
      ProvNode n;
      n.sig = sig_from_json(jn.at("sig"));
      n.title = jn.at("title").get<std::string>();
      for (const auto& [k, v] : jn.at("attrs").items()) n.attrs[k] = v.get<std::string>();
      const int step = jn.at("step").get<int>();
      g.nodes[n.sig] = n;
      g.step_of[n.sig] = step;
    }
    for (const auto& je : j.at("edges")) {
      EventEdge e;
      e.src = sig_from_json(je.at("src"));
      e.dst = sig_from_json(je.at("dst"));
      e.rel = Relation::parse(je.at("rel").get<std::string>());
      e.count = je.at("count").get<std::int64_t>();
      e.timestamps = je.at("timestamps").get<std::vector<Timestamp>>();
      if (e.timestamps.empty()) throw Error(ErrorCode::InvalidArgument, "edge without timestamps");
      if (je.contains("attrs")) {
        for (const auto& [k, v] : je.at("attrs").items()) e.attrs[k] = v.get<std::string>();
      }
      g.edges[key_of(e)] = std::move(e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad graph json: ") + e.what());
  }
  return g;
}

json stats_to_json(const QueryStats& st) {
  return {{"seeds", st.seeds},
          {"visited", st.visited},
          {"frames", st.frames},
          {"backend_calls", st.backend_calls},
          {"traversal_ms", st.traversal_ms},
          {"total_ms", st.total_ms},
          {"degraded", st.degraded},
          {"warning", st.warning}};
}

json result_to_json(const QueryResult& r) {
  return {{"step", r.step}, {"graph", graph_to_json(r.graph)}, {"stats", stats_to_json(r.stats)}};
}

std::string to_dot(const ForensicGraph& g, RenderMode mode) {
  const auto r = render_graph(g, mode);
  std::ostringstream out;
  out << "digraph graalf {\n  node [style=filled];\n";
  for (const auto& n : r.nodes) {
    out << "  \"" << dot_escape(to_string(n.sig)) << "\" [label=\"" << dot_escape(n.title)
        << "\", shape=" << shape(n.kind) << ", fillcolor=" << step_color(n.step) << "];\n";
  }
  for (const auto& e : r.edges) {
    out << "  \"" << dot_escape(to_string(e.src)) << "\" -> \"" << dot_escape(to_string(e.dst))
        << "\" [label=\"" << dot_escape(e.label) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

std::string export_string(const ForensicGraph& g, ExportFormat fmt, RenderMode mode) {
  if (fmt == ExportFormat::Dot) return to_dot(g, mode);
  return graph_to_json(g).dump(2) + "\n";
}

void export_graph(const ForensicGraph& g, ExportFormat fmt, const std::filesystem::path& path,
                  RenderMode mode) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << export_string(g, fmt, mode);
  if (!out) throw Error(ErrorCode::IoError, "write to " + path.string() + " failed");
}

}  // namespace graalf
