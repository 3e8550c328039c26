#include "doctest.h"

#include "stlgrad/parser.hpp"
#include "support/generators.hpp"
#include "support/malformed.hpp"

#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

using namespace stlgrad;
using stlgrad::testing::zero_parameters;

namespace {

Formula pred(Mu m, Comparison c, double v) {
  return Formula::predicate({std::move(m), c, {v, {}}});
}

void check_spans_nest(const Formula &f, std::size_t text_size) {
  const SourceSpan s = f.span();
  CHECK(s.start <= s.end);
  CHECK(s.end <= text_size);
  for (std::size_t i = 0; i < f.arity(); ++i) {
    const SourceSpan c = f.child(i).span();
    CHECK(c.start >= s.start);
    CHECK(c.end <= s.end);
    check_spans_nest(f.child(i), text_size);
  }
}

struct Dot {
  std::map<std::string, std::string> cls;
  std::map<std::string, std::string> label;
  std::vector<std::pair<std::string, std::string>> edges;
};

Dot read_dot(const std::string &text) {
  Dot d;
  const std::regex node(R"re(^\s*(n\d+) \[label="([^"]*)", class="(\w+)")re");
  const std::regex edge(R"(^\s*(n\d+) -> (n\d+);)");
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, node)) {
      d.cls[m[1]] = m[3];
      d.label[m[1]] = m[2];
    } else if (std::regex_search(line, m, edge)) {
      d.edges.emplace_back(m[1], m[2]);
    }
  }
  return d;
}

std::vector<std::string> sinks(const Dot &d) {
  std::set<std::string> has_out;
  for (const auto &[a, b] : d.edges)
    has_out.insert(a);
  std::vector<std::string> out;
  for (const auto &[id, c] : d.cls)
    if (!has_out.count(id))
      out.push_back(id);
  return out;
}

bool acyclic(const Dot &d) {
  std::map<std::string, int> indeg;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto &[id, c] : d.cls)
    indeg[id] = 0;
  for (const auto &[a, b] : d.edges) {
    adj[a].push_back(b);
    ++indeg[b];
  }
  std::vector<std::string> ready;
  for (const auto &[id, n] : indeg)
    if (n == 0)
      ready.push_back(id);
  std::size_t seen = 0;
  while (!ready.empty()) {
    const std::string id = ready.back();
    ready.pop_back();
    ++seen;
    for (const auto &b : adj[id])
      if (--indeg[b] == 0)
        ready.push_back(b);
  }
  return seen == indeg.size();
}

} // namespace

TEST_SUITE("parser") {

TEST_CASE("nested temporal formula") {
  const Formula f = parse("eventually[0,5] (always (x0 > 0.4 and x0 < 0.6))", 1);
  const Formula expected = Formula::eventually(
      Formula::always(Formula::conjunction(pred(mu::Coordinate{0}, Comparison::Greater, 0.4),
                                           pred(mu::Coordinate{0}, Comparison::Less, 0.6))),
      {0, 5});
  CHECK(f == expected);
  CHECK(f.child(0).interval().is_positive_ray());
}

TEST_CASE("learnable threshold") {
  const Formula f = parse("always[50,100] abs(x0 - 1) < eps1", 1);
  REQUIRE(f.op() == Op::Always);
  CHECK(f.interval().lower() == 50.0);
  CHECK(f.interval().upper() == 100.0);
  const Predicate &p = f.child(0).predicate();
  CHECK(p.mu == Mu{mu::AbsDeviation{0, 1.0}});
  CHECK(p.comparison == Comparison::Less);
  CHECK(p.threshold.parameter == std::optional<std::string>("eps1"));
  CHECK(p.threshold.value == 0.0);
  CHECK(f.parameters() == std::vector<std::string>{"eps1"});

  ParserConfig cfg;
  cfg.parameters["eps1"] = 0.25;
  CHECK(parse("always[50,100] abs(x0 - 1) < eps1", cfg).child(0).predicate().threshold.value ==
        0.25);
}

TEST_CASE("missing threshold") {
  try {
    parse("x0 >", 1);
    FAIL("expected a ParseError");
  } catch (const ParseError &e) {
    CHECK(e.span().start == 4);
    CHECK(e.span().end == 4);
    CHECK(e.expected() == std::vector<std::string>{"number", "parameter name"});
    CHECK_FALSE(e.message().empty());
  }
}

TEST_CASE("precedence") {
  const Formula a = parse("x0 > 0", 2), b = parse("x0 < 1", 2), c = parse("x1 > 2", 2);
  CHECK(parse("not x0 > 0 and x0 < 1", 2) ==
        Formula::conjunction(Formula::negation(a), b));
  CHECK(parse("x0 > 0 or x0 < 1 and x1 > 2", 2) ==
        Formula::disjunction(a, Formula::conjunction(b, c)));
  CHECK(parse("x0 > 0 -> x0 < 1 -> x1 > 2", 2) ==
        Formula::implication(a, Formula::implication(b, c)));
  CHECK(parse("x0 > 0 or x0 < 1 -> x1 > 2", 2) ==
        Formula::implication(Formula::disjunction(a, b), c));
  CHECK(parse("x0 > 0 -> x0 < 1 until[1,2] x1 > 2", 2) ==
        Formula::until(Formula::implication(a, b), c, {1, 2}));
  CHECK(parse("always x0 > 0 and x0 < 1", 2) ==
        Formula::conjunction(Formula::always(a), b));
  CHECK(parse("always (x0 > 0 and x0 < 1)", 2) ==
        Formula::always(Formula::conjunction(a, b)));
  CHECK(parse("x0 > 0 and x0 < 1 and x1 > 2", 2) ==
        Formula::conjunction(Formula::conjunction(a, b), c));
  CHECK(parse("x0 > 0 until x0 < 1 until x1 > 2", 2) ==
        Formula::until(a, Formula::until(b, c)));
}

TEST_CASE("unicode aliases") {
  CHECK(parse("\xe2\x97\x8a \xe2\x96\xa1[0,2] (x0 \xe2\x89\xa5 1 \xe2\x88\xa7 \xc2\xac x1 \xe2\x89\xa4 0)", 2) ==
        parse("eventually always[0,2] (x0 >= 1 and not x1 <= 0)", 2));
  CHECK(parse("x0 > 1 \xe2\x86\x92 \xe2\x8a\xa4", 1) == parse("x0 > 1 -> true", 1));
  CHECK(parse("x0 > 1 || x0 < 0 && !x0 > 3", 1) == parse("x0 > 1 or x0 < 0 and not x0 > 3", 1));
  CHECK(parse("always[1,\xe2\x88\x9e) x0 > 0", 1) == parse("always[1,inf) x0 > 0", 1));
}

TEST_CASE("mu forms") {
  CHECK(parse("x1 > 0", 2).predicate().mu == Mu{mu::Coordinate{1}});
  CHECK(parse("2*x0 - x1 + 0.5 > 0", 2).predicate().mu ==
        Mu{mu::Affine{{0, 1}, {2.0, -1.0}, 0.5}});
  CHECK(parse("x0 - 3 <= 0", 1).predicate().mu == Mu{mu::Affine{{0}, {1.0}, -3.0}});
  CHECK(parse("norm(x0 - 1, x1 + 2) < 3", 2).predicate().mu ==
        Mu{mu::Norm{{0, 1}, {1.0, -2.0}}});
  CHECK(parse("box(x0:[0,1], x1:[-1,2]) > 0", 2).predicate().mu ==
        Mu{mu::BoxMargin{{0, 1}, {0.0, -1.0}, {1.0, 2.0}}});
  const Formula w = parse("integral[0,2;0.5/dt] x0 > 0", 1);
  CHECK(w.weight() == IntegralWeight{0.5, true});
}

TEST_CASE("aliases and regions") {
  ParserConfig cfg;
  cfg.dim = 2;
  cfg.aliases["s"] = 0;
  cfg.aliases["v"] = 1;
  cfg.regions["goal"] = Region::box({0, 1}, {0, 0}, {1, 1});
  cfg.regions["obs"] = Region::ball({0, 1}, {2, 2}, 0.5);
  CHECK(parse("s > 1 and v < 0", cfg) == parse("x0 > 1 and x1 < 0", 2));
  CHECK(parse("eventually inside goal", cfg) ==
        Formula::eventually(Formula::predicate(cfg.regions["goal"].predicate())));
  const Predicate obs = parse("inside obs", cfg).predicate();
  CHECK(obs.mu == Mu{mu::Norm{{0, 1}, {2, 2}}});
  CHECK(obs.comparison == Comparison::Less);
  CHECK(obs.threshold.value == 0.5);
}

TEST_CASE("time parameters are rejected") {
  try {
    parse("always[a,5] x0 > 0", 1);
    FAIL("expected a ParseError");
  } catch (const ParseError &e) {
    CHECK(e.span().start == 7);
    CHECK(e.span().end == 8);
  }
}

TEST_CASE("spans nest with the tree") {
  const std::string text = "eventually[0,5] (always (x0 > 0.4 and x0 < 0.6)) or not x0 > 1";
  const Formula f = parse(text, 1);
  check_spans_nest(f, text.size());
  CHECK(f.span().start == 0);
  CHECK(f.span().end == text.size());
  const SourceSpan p = f.child(1).child(0).span();
  CHECK(text.substr(p.start, p.end - p.start) == "x0 > 1");
}

TEST_CASE("unparse canonical forms") {
  const Formula p = parse("x0 > 1", 1);
  CHECK(unparse(Formula::negation(Formula::negation(p))) == "not (not (x0 > 1))");
  CHECK(unparse(Formula::until(p, parse("x0 < 0", 1), {1, 3})) ==
        "(x0 > 1) until[1,3] (x0 < 0)");
  CHECK(unparse(Formula::always(p, Interval::unbounded_from(2))) == "always[2,inf) (x0 > 1)");
  CHECK(unparse(Formula::eventually(p)) == "eventually (x0 > 1)");
  CHECK(unparse(parse("always[50,100] abs(x0 - 1) < eps1", 1)) ==
        "always[50,100] (abs(x0 - 1) < eps1)");
}

TEST_CASE("examples round-trip") {
  for (const char *text : {"eventually[0,5] (always (x0 > 0.4 and x0 < 0.6))",
                           "always[50,100] abs(x0 - 1) < eps1", "x0 > 1 until[0,3] x0 < 2",
                           "integral[0,2;1/dt] (x0 > 0.1)", "true -> -x0 + 2 >= -1.5"}) {
    CAPTURE(text);
    const Formula f = parse(text, 1);
    CHECK(parse(unparse(f), 1) == f);
  }
}

TEST_CASE("random formulas round-trip") {
  std::mt19937_64 rng(101);
  for (std::size_t dim : {1u, 2u, 3u}) {
    stlgrad::testing::FormulaGen gen(rng, dim, 0.1 * static_cast<double>(dim));
    gen.with_parameters = true;
    for (int k = 0; k < 400; ++k) {
      const Formula f = k % 4 == 0 ? gen.covering(4) : gen.any(1 + k % 5);
      const std::string text = unparse(f);
      CAPTURE(text);
      const Formula g = parse(text, dim);
      CHECK(g == zero_parameters(f));
      CHECK(unparse(g) == unparse(zero_parameters(f)));
      check_spans_nest(g, text.size());
    }
  }
}

TEST_CASE("malformed input") {
  for (std::string_view text : stlgrad::testing::malformed_formulas()) {
    CAPTURE(text);
    bool raised = false;
    try {
      parse(text, 2);
    } catch (const ParseError &e) {
      raised = true;
      CHECK(e.span().start <= e.span().end);
      CHECK(e.span().end <= text.size());
      CHECK_FALSE(e.message().empty());
    }
    CHECK(raised);
  }
}

TEST_CASE("dot for a single predicate") {
  const Dot d = read_dot(to_dot(parse("x0 > 0.5", 1)));
  std::map<std::string, int> count;
  for (const auto &[id, c] : d.cls)
    ++count[c];
  CHECK(count["input"] == 1);
  CHECK(count["parameter"] == 1);
  CHECK(count["operator"] == 1);
  CHECK(d.edges.size() == 2);
  for (const auto &[from, to] : d.edges)
    CHECK(d.cls.at(to) == "operator");
}

TEST_CASE("dot for and") {
  const Dot d = read_dot(to_dot(parse("x0 > 0 and x1 < 1", 2)));
  const auto s = sinks(d);
  REQUIRE(s.size() == 1);
  CHECK(d.label.at(s[0]) == "\xe2\x88\xa7");
  int incoming = 0;
  for (const auto &[from, to] : d.edges)
    incoming += to == s[0];
  CHECK(incoming == 2);
}

TEST_CASE("dot for eventually always of a conjunction") {
  const Dot d = read_dot(to_dot(parse("eventually always (x0 > 0 and x1 < 1)", 2)));
  CHECK(d.cls.size() == 9);
  CHECK(d.edges.size() == 8);
  CHECK(acyclic(d));
  const auto s = sinks(d);
  REQUIRE(s.size() == 1);
  // Follow the chain down from the root: eventually <- always <- and.
  auto parents_of = [&](const std::string &id) {
    std::vector<std::string> out;
    for (const auto &[from, to] : d.edges)
      if (to == id)
        out.push_back(from);
    return out;
  };
  CHECK(d.label.at(s[0]).rfind("\xe2\x97\x8a", 0) == 0);
  const auto always = parents_of(s[0]);
  REQUIRE(always.size() == 1);
  CHECK(d.label.at(always[0]).rfind("\xe2\x96\xa1", 0) == 0);
  const auto conj = parents_of(always[0]);
  REQUIRE(conj.size() == 1);
  CHECK(d.label.at(conj[0]) == "\xe2\x88\xa7");
  const auto preds = parents_of(conj[0]);
  REQUIRE(preds.size() == 2);
  for (const auto &p : preds) {
    std::set<std::string> kinds;
    for (const auto &q : parents_of(p))
      kinds.insert(d.cls.at(q));
    CHECK(kinds == std::set<std::string>{"input", "parameter"});
  }
}

TEST_CASE("dot is acyclic with one sink") {
  std::mt19937_64 rng(5);
  stlgrad::testing::FormulaGen gen(rng, 2);
  for (int k = 0; k < 100; ++k) {
    const Dot d = read_dot(to_dot(gen.any(4)));
    CHECK(acyclic(d));
    CHECK(sinks(d).size() == 1);
  }
}

} // TEST_SUITE
