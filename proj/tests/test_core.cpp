#include "doctest.h"

#include "stlgrad/core.hpp"
#include "support/generators.hpp"

#include <random>

using namespace stlgrad;

namespace {

std::vector<double> samples(const Signal &s) {
  return {s.values().begin(), s.values().end()};
}

Formula gt(std::size_t k, double c) {
  return Formula::predicate({mu::Coordinate{k}, Comparison::Greater, {c, {}}});
}

} // namespace

TEST_SUITE("core") {

TEST_CASE("subsignal") {
  const Signal s = Signal::scalar({1, 2, 3}, 0.5, 1.0);
  CHECK(samples(s.subsignal(0)) == std::vector<double>{1, 2, 3});
  CHECK(samples(s.subsignal(2)) == std::vector<double>{3});
  CHECK(s.subsignal(2).t0() == 2.0);
  CHECK(samples(Signal::scalar({1, 1, 1, 2, 3, 1}).subsignal(3)) ==
        std::vector<double>{2, 3, 1});
  CHECK_THROWS_AS(s.subsignal(3), InvalidArgument);
}

TEST_CASE("subsignal composes") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Signal s = stlgrad::testing::random_signal(rng, 2, 12, 2);
    const std::size_t i = rng() % 12;
    const std::size_t j = rng() % (12 - i);
    const Signal a = s.subsignal(i).subsignal(j);
    const Signal b = s.subsignal(i + j);
    CHECK(samples(a) == samples(b));
    CHECK(a.t0() == doctest::Approx(b.t0()));
  }
}

TEST_CASE("signal validation") {
  CHECK_THROWS_AS(Signal(1, 0, 1, {}), InvalidArgument);
  CHECK_THROWS_AS(Signal(1, 2, 1, {1.0, 2.0}, 0.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(Signal(1, 2, 1, {1.0}), InvalidArgument);
  CHECK_THROWS_AS(Signal(2, 2, 1, {1, 2, 3, 4}, 0, 1, {2, 3}), InvalidArgument);
  CHECK_THROWS_AS(Signal::from_states({{1, 2}, {3}}), InvalidArgument);
}

TEST_CASE("batch_of pads with the last state") {
  const Signal b = Signal::batch_of({Signal::scalar({1, 2}), Signal::scalar({5, 6, 7})});
  CHECK(b.batch() == 2);
  CHECK(b.time() == 3);
  CHECK(b.lengths() == std::vector<std::size_t>{2, 3});
  CHECK(b.at(0, 2, 0) == 2.0);
  CHECK_FALSE(b.uniform_length());
  CHECK(samples(b.element(0)) == std::vector<double>{1, 2});
}

TEST_CASE("interval counts") {
  const auto c02 = interval_to_counts({0, 2}, 1.0);
  CHECK(*c02.n_b == 3);
  CHECK(c02.n_a == 1);
  CHECK(*c02.m == 3);

  const auto c2inf = interval_to_counts(Interval::unbounded_from(2), 1.0);
  CHECK(c2inf.n_a == 3);
  CHECK_FALSE(c2inf.n_b);
  CHECK_FALSE(c2inf.m);

  const auto c13 = interval_to_counts({1, 3}, 1.0);
  CHECK(*c13.n_b == 4);
  CHECK(*c13.m == 3);

  const auto fine = interval_to_counts({0.3, 0.5}, 0.1);
  CHECK(fine.n_a == 4);
  CHECK(*fine.n_b == 6);

  CHECK_THROWS_AS(interval_to_counts({0, 0.25}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(Interval(3, 2), InvalidArgument);
  CHECK_THROWS_AS(Interval(-1, 2), InvalidArgument);
}

TEST_CASE("interval counts are monotone in b") {
  std::size_t prev = 0;
  for (int b = 0; b < 30; ++b) {
    const auto c = interval_to_counts({0, b * 0.1}, 0.1);
    CHECK(*c.n_b >= prev);
    prev = *c.n_b;
  }
}

TEST_CASE("predicates") {
  const double x[] = {0.7, -2.0};
  Predicate p{mu::Coordinate{0}, Comparison::Greater, {0.5, {}}};
  CHECK(p.robustness(x, 0.5) == doctest::Approx(0.2));
  p.comparison = Comparison::Less;
  CHECK(p.robustness(x, 0.5) == doctest::Approx(-0.2));

  const double edge[] = {0.5};
  Predicate strict{mu::Coordinate{0}, Comparison::Greater, {0.5, {}}};
  Predicate loose{mu::Coordinate{0}, Comparison::GreaterEq, {0.5, {}}};
  CHECK_FALSE(strict.holds(edge, 0.5));
  CHECK(loose.holds(edge, 0.5));
  CHECK(strict.robustness(edge, 0.5) == loose.robustness(edge, 0.5));

  CHECK(evaluate_mu(mu::Norm{{0, 1}, {0.7, 1.0}}, x) == doctest::Approx(3.0));
  CHECK(evaluate_mu(mu::AbsDeviation{1, 1.0}, x) == 3.0);
  CHECK(evaluate_mu(mu::Affine{{0, 1}, {2.0, 1.0}, 0.5}, x) == doctest::Approx(-0.1));
  const double inside[] = {0.25, 0.6};
  CHECK(evaluate_mu(mu::BoxMargin{{0, 1}, {0, 0}, {1, 1}}, inside) ==
        doctest::Approx(0.25));

  double g[2];
  mu_gradient(mu::BoxMargin{{0, 1}, {0, 0}, {1, 1}}, inside, g);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("formula construction") {
  const Formula f =
      Formula::conjunction(gt(0, 0.1), Formula::eventually(gt(2, 0.0), {1, 2}));
  CHECK(f.op() == Op::And);
  CHECK(f.arity() == 2);
  CHECK(f.size() == 4);
  CHECK(f.depth() == 3);
  CHECK(f.required_dim() == 3);
  CHECK(f.child(1).interval() == Interval(1, 2));
  CHECK_THROWS_AS(f.child(2), InvalidArgument);
  CHECK_THROWS_AS(f.interval(), InvalidArgument);
  CHECK_THROWS_AS(Formula::integral(gt(0, 0), Interval::unbounded_from(1)),
                  InvalidArgument);

  Predicate p{mu::Coordinate{0}, Comparison::Less, {0.0, std::string("eps")}};
  const Formula q = Formula::disjunction(Formula::predicate(p), Formula::predicate(p));
  CHECK(q.parameters() == std::vector<std::string>{"eps"});
}

TEST_CASE("structural equality ignores spans") {
  const Formula a = Formula::always(gt(0, 1.0));
  const Formula b = Formula::always(gt(0, 1.0)).with_span({3, 9});
  CHECK(a == b);
  CHECK_FALSE(a == Formula::eventually(gt(0, 1.0)));
  CHECK_FALSE(a == Formula::always(gt(0, 1.5)));
}

TEST_CASE("eval config validation") {
  EvalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.w = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.w = 0;
  cfg.mode = Approximation::LogSumExp;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.mode = Approximation::Exact;
  cfg.rho_max = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

} // TEST_SUITE
