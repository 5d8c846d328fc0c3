/**
 * @file query.hpp
 * @brief The forensic query language.
 *
 *   [back|forward] select <*|syscall> from <*|file|soc|socket|process|thread|unit|pipe>
 *       [where <cond> (and <cond>)*] [;]
 *   cond  := (name | file name | pid | date | <attr>) (is | has) <value>
 *   set (compression|mode|memory_limit|evict_threshold) <value>
 *   limit depth <n>
 *
 * Keywords are ASCII case-insensitive; values are case-sensitive and run to
 * the next " and " or the end of the statement, so they may contain spaces.
 * A value may also be double-quoted.
 */
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "graalf/model.hpp"
#include "graalf/store.hpp"

namespace graalf {

enum class CondField { Name, FileName, Pid, Date, Attr };

struct Condition {
  CondField field = CondField::Name;
  std::string attr;  // only for CondField::Attr
  MatchOp op = MatchOp::Is;
  std::string value;

  bool operator==(const Condition&) const = default;
};

struct QueryAst {
  /// Back or Forward; nullopt for a plain select.
  std::optional<TraceDirection> direction;
  /// Syscall name; nullopt for `*`.
  std::optional<std::string> edge_filter;
  /// nullopt for `*`.
  std::optional<NodeKind> kind;
  std::vector<Condition> predicate;

  bool operator==(const QueryAst&) const = default;
};

enum class ConfigKey { Compression, Mode, MemoryLimit, EvictThreshold, DepthLimit };

struct ConfigCommand {
  ConfigKey key = ConfigKey::Compression;
  std::string value;

  bool operator==(const ConfigCommand&) const = default;
};

using Statement = std::variant<QueryAst, ConfigCommand>;

/// Throws SyntaxError, or InvalidConfig for a config value of the wrong shape.
Statement parse_query(std::string_view text);

/// Throws Error{EmptyCriteria} for queries without a where clause.
void validate_ast(const QueryAst& ast);

std::string to_string(const QueryAst& ast);
std::string to_string(const ConfigCommand& cmd);

}  // namespace graalf
