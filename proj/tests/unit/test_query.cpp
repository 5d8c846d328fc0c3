#include "doctest.h"

#include <random>

#include "graalf/query.hpp"
#include "synth.hpp"

using namespace graalf;

namespace {

QueryAst ast_of(const std::string& text) { return std::get<QueryAst>(parse_query(text)); }

}  // namespace

TEST_CASE("every corpus query parses and round trips") {
  for (const auto& q : synth::corpus_queries()) {
    INFO(q);
    auto ast = ast_of(q);
    CHECK_NOTHROW(validate_ast(ast));
    CHECK(ast_of(to_string(ast)) == ast);
  }
}

TEST_CASE("query structure") {
  auto a = ast_of("forward select * from * where name is tar and pid is 13899;");
  CHECK(a.direction == TraceDirection::Forward);
  CHECK_FALSE(a.edge_filter);
  CHECK_FALSE(a.kind);
  REQUIRE(a.predicate.size() == 2);
  CHECK(a.predicate[0] == Condition{CondField::Name, "", MatchOp::Is, "tar"});
  CHECK(a.predicate[1] == Condition{CondField::Pid, "", MatchOp::Is, "13899"});

  auto m = ast_of(synth::corpus_queries()[11]);
  CHECK(m.edge_filter == "write");
  REQUIRE(m.predicate.size() == 2);
  CHECK(m.predicate[0].field == CondField::FileName);
  CHECK(m.predicate[0].value == "/home /user1/Downloads/");
  CHECK(m.predicate[1].field == CondField::Date);

  auto s = ast_of("BACK Select * FROM soc WHERE name HAS 128.55.12.167:4343");
  CHECK(s.kind == NodeKind::Socket);
  CHECK(s.direction == TraceDirection::Back);

  auto q = ast_of("select * from file where name is \"a and b\"");
  CHECK(q.predicate[0].value == "a and b");
  CHECK(ast_of(to_string(q)) == q);

  auto attr = ast_of("select * from * where inode is 42");
  CHECK(attr.predicate[0].field == CondField::Attr);
  CHECK(attr.predicate[0].attr == "inode");
}

TEST_CASE("syntax errors carry the token position") {
  try {
    parse_query("select from where");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.token() == 2);
    CHECK(e.offset() == 7);
  }
  CHECK_THROWS_AS(parse_query(""), SyntaxError);
  CHECK_THROWS_AS(parse_query("select * from * where name is"), SyntaxError);
  CHECK_THROWS_AS(parse_query("select * from * where name is x and"), SyntaxError);
  CHECK_THROWS_AS(parse_query("select * from nowhere where name is x"), SyntaxError);
  CHECK_THROWS_AS(parse_query("select * from * where name is \"open"), SyntaxError);
  CHECK_THROWS_AS(parse_query("select * from * where name is x ; extra"), SyntaxError);
}

TEST_CASE("criteria rule") {
  try {
    validate_ast(ast_of("select * from *"));
    FAIL("expected EmptyCriteria");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCriteria);
  }
  CHECK_THROWS_AS(validate_ast(ast_of("select * from process")), Error);
  CHECK_NOTHROW(validate_ast(ast_of("select * from file where name has x")));
}

TEST_CASE("config commands") {
  auto c = std::get<ConfigCommand>(parse_query("set compression C2"));
  CHECK(c.key == ConfigKey::Compression);
  CHECK(c.value == "c2");
  CHECK(std::get<ConfigCommand>(parse_query("set mode verbose;")).value == "verbose");
  CHECK(std::get<ConfigCommand>(parse_query("limit depth 3")).key == ConfigKey::DepthLimit);
  CHECK(std::get<ConfigCommand>(parse_query("set evict_threshold 0.75")).value == "0.75");
  CHECK_THROWS_AS(parse_query("set compression c9"), Error);
  CHECK_THROWS_AS(parse_query("set mode loud"), Error);
  CHECK_THROWS_AS(parse_query("set memory_limit -5"), Error);
  CHECK_THROWS_AS(parse_query("set evict_threshold 1.5"), Error);
  CHECK_THROWS_AS(parse_query("limit depth 0"), Error);
  CHECK_THROWS_AS(parse_query("set colour red"), SyntaxError);
  CHECK(to_string(std::get<ConfigCommand>(parse_query("limit depth 4"))) == "limit depth 4");
}

TEST_CASE("fuzz: arbitrary bytes and mutated queries never crash") {
  std::mt19937_64 rng(2024);
  const auto& corpus = synth::corpus_queries();
  static const char* fragments[] = {" and ", ";", "\"", "select", "from", "where", "*",
                                    "is", "has", "back", "set ", "\n", "\t", "\xff"};
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    if (i % 2 == 0) {
      const int len = static_cast<int>(rng() % 64);
      for (int k = 0; k < len; ++k) s.push_back(static_cast<char>(rng() % 256));
    } else {
      s = corpus[rng() % corpus.size()];
      const int edits = 1 + static_cast<int>(rng() % 4);
      for (int k = 0; k < edits && !s.empty(); ++k) {
        const auto pos = rng() % s.size();
        switch (rng() % 3) {
          case 0: s.erase(pos, 1 + rng() % 5); break;
          case 1: s.insert(pos, fragments[rng() % std::size(fragments)]); break;
          default: s[pos] = static_cast<char>(rng() % 256); break;
        }
      }
    }
    try {
      auto stmt = parse_query(s);
      if (auto* ast = std::get_if<QueryAst>(&stmt)) {
        // Whatever parses must print to something that parses back equal.
        CHECK(ast_of(to_string(*ast)) == *ast);
      }
    } catch (const Error&) {
    }
  }
}
