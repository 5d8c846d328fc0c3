#include "graalf/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>

namespace graalf {

namespace {

struct Token {
  std::string text;  // raw text, or the contents of a quoted token
  std::size_t offset = 0;
  std::size_t end = 0;
  bool quoted = false;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

constexpr std::string_view kReserved[] = {"select", "from", "where", "and",  "back",
                                          "forward", "is",  "has",   "set",  "limit"};

bool reserved(std::string_view word) {
  const auto l = lower(word);
  return std::find(std::begin(kReserved), std::end(kReserved), l) != std::end(kReserved);
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto first = static_cast<unsigned char>(s.front());
  if (!std::isalpha(first) && first != '_') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || c == '.';
  });
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) { lex(); }

  Statement statement() {
    if (at_kw("set")) return set_command();
    if (at_kw("limit")) return limit_command();
    return query();
  }

 private:
  [[noreturn]] void fail(std::vector<std::string> expected) const {
    const std::size_t offset = p_ < toks_.size() ? toks_[p_].offset : text_.size();
    const std::string found = p_ < toks_.size() ? toks_[p_].text : "end of input";
    throw SyntaxError(p_ + 1, offset, std::move(expected), found);
  }

  void lex() {
    std::size_t i = 0;
    const std::size_t n = text_.size();
    while (true) {
      while (i < n && is_space(text_[i])) ++i;
      if (i >= n) break;
      Token t;
      t.offset = i;
      if (text_[i] == '"') {
        auto close = text_.find('"', i + 1);
        if (close == std::string_view::npos) {
          throw SyntaxError(toks_.size() + 1, i, {"closing '\"'"}, std::string(text_.substr(i)));
        }
        t.text = std::string(text_.substr(i + 1, close - i - 1));
        t.quoted = true;
        i = close + 1;
      } else {
        while (i < n && !is_space(text_[i])) ++i;
        t.text = std::string(text_.substr(t.offset, i - t.offset));
      }
      t.end = i;
      toks_.push_back(std::move(t));
    }
    // A trailing ';' terminates the statement even when glued to a value.
    if (!toks_.empty() && !toks_.back().quoted && toks_.back().text.size() > 1 &&
        toks_.back().text.back() == ';') {
      Token semi{";", toks_.back().end - 1, toks_.back().end, false};
      toks_.back().text.pop_back();
      toks_.back().end -= 1;
      toks_.push_back(semi);
    }
  }

  bool at_end() const { return p_ >= toks_.size(); }
  bool at_semi() const { return !at_end() && !toks_[p_].quoted && toks_[p_].text == ";"; }

  bool at_kw(std::string_view kw) const {
    return !at_end() && !toks_[p_].quoted && lower(toks_[p_].text) == kw;
  }

  void expect_kw(std::string_view kw) {
    if (!at_kw(kw)) fail({std::string(kw)});
    ++p_;
  }

  void expect_end() {
    if (at_semi()) ++p_;
    if (!at_end()) fail({"end of statement"});
  }

  QueryAst query() {
    QueryAst ast;
    if (at_kw("back")) {
      ast.direction = TraceDirection::Back;
      ++p_;
    } else if (at_kw("forward")) {
      ast.direction = TraceDirection::Forward;
      ++p_;
    }
    if (!at_kw("select")) {
      if (ast.direction) fail({"select"});
      fail({"select", "back", "forward", "set", "limit"});
    }
    ++p_;

    if (at_end() || toks_[p_].quoted) fail({"*", "<syscall>"});
    if (toks_[p_].text == "*") {
      ++p_;
    } else if (is_identifier(toks_[p_].text) && !reserved(toks_[p_].text)) {
      ast.edge_filter = lower(toks_[p_].text);
      ++p_;
    } else {
      fail({"*", "<syscall>"});
    }

    expect_kw("from");
    static const std::vector<std::string> kinds = {"*",      "file",   "soc",  "socket",
                                                   "process", "thread", "unit", "pipe"};
    if (at_end() || toks_[p_].quoted) fail(kinds);
    const auto k = lower(toks_[p_].text);
    if (k == "*") {
    } else if (k == "file") {
      ast.kind = NodeKind::File;
    } else if (k == "soc" || k == "socket") {
      ast.kind = NodeKind::Socket;
    } else if (k == "process") {
      ast.kind = NodeKind::Process;
    } else if (k == "thread") {
      ast.kind = NodeKind::Thread;
    } else if (k == "unit") {
      ast.kind = NodeKind::ExecutionUnit;
    } else if (k == "pipe") {
      ast.kind = NodeKind::Pipe;
    } else {
      fail(kinds);
    }
    ++p_;

    if (at_end() || at_semi()) {
      expect_end();
      return ast;
    }
    if (!at_kw("where")) fail({"where", ";", "end of statement"});
    ++p_;
    ast.predicate.push_back(condition());
    while (at_kw("and")) {
      ++p_;
      ast.predicate.push_back(condition());
    }
    if (!at_end() && !at_semi()) fail({"and", ";", "end of statement"});
    expect_end();
    return ast;
  }

  Condition condition() {
    static const std::vector<std::string> fields = {"name", "file name", "pid", "date",
                                                    "<attribute>"};
    Condition c;
    if (at_end() || toks_[p_].quoted) fail(fields);
    const auto f = lower(toks_[p_].text);
    if (f == "name") {
      c.field = CondField::Name;
    } else if (f == "file") {
      ++p_;
      if (!at_kw("name")) fail({"name"});
      c.field = CondField::FileName;
    } else if (f == "pid") {
      c.field = CondField::Pid;
    } else if (f == "date") {
      c.field = CondField::Date;
    } else if (is_identifier(toks_[p_].text) && !reserved(toks_[p_].text)) {
      c.field = CondField::Attr;
      c.attr = toks_[p_].text;
    } else {
      fail(fields);
    }
    ++p_;
    if (at_kw("is")) {
      c.op = MatchOp::Is;
    } else if (at_kw("has")) {
      c.op = MatchOp::Has;
    } else {
      fail({"is", "has"});
    }
    ++p_;
    c.value = value();
    return c;
  }

  std::string value() {
    if (at_end() || at_semi() || at_kw("and")) fail({"<value>"});
    if (toks_[p_].quoted) return toks_[p_++].text;
    const std::size_t start = toks_[p_].offset;
    std::size_t end = toks_[p_].end;
    ++p_;
    while (!at_end() && !at_semi() && !at_kw("and")) {
      if (toks_[p_].quoted) fail({"and", ";", "end of statement"});
      end = toks_[p_].end;
      ++p_;
    }
    return std::string(text_.substr(start, end - start));
  }

  /// Raw remainder of the statement, minus a trailing ';'.
  std::string rest() {
    if (at_end() || at_semi()) fail({"<value>"});
    const std::size_t start = toks_[p_].offset;
    std::size_t end = start;
    while (!at_end() && !at_semi()) end = toks_[p_++].end;
    expect_end();
    return std::string(text_.substr(start, end - start));
  }

  ConfigCommand set_command() {
    ++p_;
    static const std::vector<std::string> keys = {"compression", "mode", "memory_limit",
                                                  "evict_threshold"};
    if (at_end() || toks_[p_].quoted) fail(keys);
    const auto k = lower(toks_[p_].text);
    ConfigCommand cmd;
    if (k == "compression") {
      cmd.key = ConfigKey::Compression;
    } else if (k == "mode") {
      cmd.key = ConfigKey::Mode;
    } else if (k == "memory_limit") {
      cmd.key = ConfigKey::MemoryLimit;
    } else if (k == "evict_threshold") {
      cmd.key = ConfigKey::EvictThreshold;
    } else {
      fail(keys);
    }
    ++p_;
    cmd.value = rest();
    validate(cmd);
    return cmd;
  }

  ConfigCommand limit_command() {
    ++p_;
    expect_kw("depth");
    ConfigCommand cmd{ConfigKey::DepthLimit, rest()};
    validate(cmd);
    return cmd;
  }

  static void validate(ConfigCommand& cmd) {
    auto bad = [&](const char* want) {
      throw Error(ErrorCode::InvalidConfig, "invalid value '" + cmd.value + "': expected " + want);
    };
    auto positive_int = [&] {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(cmd.value.data(), cmd.value.data() + cmd.value.size(), v);
      return ec == std::errc{} && ptr == cmd.value.data() + cmd.value.size() && v > 0;
    };
    switch (cmd.key) {
      case ConfigKey::Compression:
        if (!parse_compression_level(cmd.value)) bad("c0, c1, c2 or c3");
        cmd.value = lower(cmd.value);
        break;
      case ConfigKey::Mode:
        cmd.value = lower(cmd.value);
        if (cmd.value != "normal" && cmd.value != "verbose") bad("normal or verbose");
        break;
      case ConfigKey::MemoryLimit:
      case ConfigKey::DepthLimit:
        if (!positive_int()) bad("a positive integer");
        break;
      case ConfigKey::EvictThreshold: {
        char* end = nullptr;
        const double v = std::strtod(cmd.value.c_str(), &end);
        if (end != cmd.value.c_str() + cmd.value.size() || !(v > 0.0 && v <= 1.0)) {
          bad("a fraction in (0, 1]");
        }
        break;
      }
    }
  }

  std::string_view text_;
  std::vector<Token> toks_;
  std::size_t p_ = 0;
};

bool needs_quotes(const std::string& v) {
  if (v.empty() || is_space(v.front()) || is_space(v.back()) || v.front() == '"' ||
      v.back() == ';') {
    return true;
  }
  std::size_t i = 0;
  while (i < v.size()) {
    while (i < v.size() && is_space(v[i])) ++i;
    std::size_t s = i;
    while (i < v.size() && !is_space(v[i])) ++i;
    if (i > s && lower(v.substr(s, i - s)) == "and") return true;
  }
  return false;
}

}  // namespace

Statement parse_query(std::string_view text) { return Parser(text).statement(); }

void validate_ast(const QueryAst& ast) {
  if (ast.predicate.empty()) {
    throw Error(ErrorCode::EmptyCriteria,
                ast.kind ? "query has no where clause; a bare kind scans the whole graph "
                           "and the output would be partial"
                         : "query has no criteria; the output would be partial");
  }
}

std::string to_string(const QueryAst& ast) {
  std::string out;
  if (ast.direction == TraceDirection::Back) out += "back ";
  if (ast.direction == TraceDirection::Forward) out += "forward ";
  out += "select " + (ast.edge_filter ? *ast.edge_filter : std::string("*")) + " from ";
  if (!ast.kind) {
    out += "*";
  } else {
    switch (*ast.kind) {
      case NodeKind::Process: out += "process"; break;
      case NodeKind::Thread: out += "thread"; break;
      case NodeKind::ExecutionUnit: out += "unit"; break;
      case NodeKind::File: out += "file"; break;
      case NodeKind::Socket: out += "soc"; break;
      case NodeKind::Pipe: out += "pipe"; break;
    }
  }
  for (std::size_t i = 0; i < ast.predicate.size(); ++i) {
    const auto& c = ast.predicate[i];
    out += i == 0 ? " where " : " and ";
    switch (c.field) {
      case CondField::Name: out += "name"; break;
      case CondField::FileName: out += "file name"; break;
      case CondField::Pid: out += "pid"; break;
      case CondField::Date: out += "date"; break;
      case CondField::Attr: out += c.attr; break;
    }
    out += c.op == MatchOp::Is ? " is " : " has ";
    out += needs_quotes(c.value) ? "\"" + c.value + "\"" : c.value;
  }
  return out;
}

std::string to_string(const ConfigCommand& cmd) {
  switch (cmd.key) {
    case ConfigKey::Compression: return "set compression " + cmd.value;
    case ConfigKey::Mode: return "set mode " + cmd.value;
    case ConfigKey::MemoryLimit: return "set memory_limit " + cmd.value;
    case ConfigKey::EvictThreshold: return "set evict_threshold " + cmd.value;
    case ConfigKey::DepthLimit: return "limit depth " + cmd.value;
  }
  return {};
}

}  // namespace graalf
