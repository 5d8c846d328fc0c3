/**
 * @file export.hpp
 * @brief DOT and JSON rendering of forensic graphs.
 *
 * The JSON form is the API wire format:
 *   {nodes:[{sig:{host,kind,id,epoch},kind,title,step,attrs}],
 *    edges:[{src,dst,rel,count,timestamps,attrs}]}
 */
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "graalf/engine.hpp"
#include "graalf/model.hpp"

namespace graalf {

enum class ExportFormat { Dot, Json };

std::optional<ExportFormat> parse_export_format(std::string_view text);

/// Fill colour for an investigation step: red, white, gray, cyan, green,
/// then cycling.
std::string_view step_color(int step);

nlohmann::json sig_to_json(const SignatureKey& sig);
SignatureKey sig_from_json(const nlohmann::json& j);

nlohmann::json graph_to_json(const ForensicGraph& g);
/// Throws InvalidArgument on malformed input.
ForensicGraph graph_from_json(const nlohmann::json& j);

nlohmann::json stats_to_json(const QueryStats& st);
/// {step, graph, stats}
nlohmann::json result_to_json(const QueryResult& r);

/// Nodes filled by step colour, edges from render_graph(g, mode).
std::string to_dot(const ForensicGraph& g, RenderMode mode = RenderMode::Normal);

std::string export_string(const ForensicGraph& g, ExportFormat fmt,
                          RenderMode mode = RenderMode::Normal);
/// Throws IoError.
void export_graph(const ForensicGraph& g, ExportFormat fmt, const std::filesystem::path& path,
                  RenderMode mode = RenderMode::Normal);

}  // namespace graalf
