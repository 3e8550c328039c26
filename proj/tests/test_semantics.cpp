#include "doctest.h"

#include "stlgrad/semantics.hpp"
#include "support/generators.hpp"

#include <cmath>
#include <random>

using namespace stlgrad;
using stlgrad::testing::FormulaGen;
using stlgrad::testing::random_signal;

namespace {

Formula x0_gt(double c) {
  return Formula::predicate({mu::Coordinate{0}, Comparison::Greater, {c, {}}});
}
Formula x0_ge(double c) {
  return Formula::predicate({mu::Coordinate{0}, Comparison::GreaterEq, {c, {}}});
}

const Signal kTable1 = Signal::scalar({1, 1, 1, 2, 3, 1});

std::vector<double> row(const RobustnessTrace &tr, std::size_t b = 0) {
  auto r = tr.row(b);
  return {r.begin(), r.end()};
}

void check_same(const RobustnessTrace &a, const RobustnessTrace &b) {
  REQUIRE(a.batch == b.batch);
  for (std::size_t e = 0; e < a.batch; ++e)
    CHECK(row(a, e) == row(b, e));
}

} // namespace

TEST_SUITE("semantics") {

TEST_CASE("eventually traces over the worked example signal") {
  CHECK(row(robustness_trace(kTable1, Formula::eventually(x0_gt(0)))) ==
        std::vector<double>{3, 3, 3, 3, 3, 1});
  CHECK(row(robustness_trace(kTable1, Formula::eventually(x0_gt(0), {0, 2}))) ==
        std::vector<double>{1, 2, 3, 3, 3, 1});
  CHECK(row(robustness_trace(
            kTable1, Formula::eventually(x0_gt(0), Interval::unbounded_from(2)))) ==
        std::vector<double>{3, 3, 3, 1, 1, 1});
  CHECK(row(robustness_trace(kTable1, Formula::eventually(x0_gt(0), {1, 3}))) ==
        std::vector<double>{2, 3, 3, 3, 1, 1});
  CHECK(row(robustness_trace(kTable1, Formula::always(x0_gt(0)))) ==
        std::vector<double>{1, 1, 1, 1, 1, 1});
}

TEST_CASE("robustness is the trace head") {
  CHECK(robustness(kTable1, Formula::eventually(x0_gt(0), {1, 3}))[0] == 2.0);
  CHECK(robustness(Signal::scalar({0.7}), x0_gt(0.5))[0] ==
        doctest::Approx(0.2).epsilon(1e-15));
  EvalConfig cfg;
  CHECK(robustness(kTable1, Formula::truth(), cfg)[0] == cfg.rho_max);
}

TEST_CASE("cell history of the bounded eventually") {
  const auto hist =
      temporal_cell_history(kTable1, Formula::eventually(x0_gt(0), {0, 2}));
  REQUIRE(hist.size() == 6);
  CHECK(hist[0].hidden == std::vector<double>{1, 1});
  CHECK(hist[2].hidden == std::vector<double>{1, 3});
  CHECK(hist[3].hidden == std::vector<double>{3, 2});
  CHECK(hist[5].output == 1.0);
  CHECK(hist[5].time == 0);
}

TEST_CASE("until") {
  SUBCASE("hand-computed start value") {
    // phi = 1,1,1 and psi = -1,-1,5 as coordinates of a 2-d signal.
    const Signal s = Signal::from_states({{1, -1}, {1, -1}, {1, 5}});
    const Formula phi = x0_gt(0);
    const Formula psi =
        Formula::predicate({mu::Coordinate{1}, Comparison::Greater, {0, {}}});
    CHECK(until_trace(s, phi, psi, {}).at(0, 0) == 1.0);
  }
  SUBCASE("true until psi is eventually psi") {
    std::mt19937_64 rng(7);
    const Signal s = random_signal(rng, 3, 20, 1);
    FormulaGen gen(rng, 1);
    for (int i = 0; i < 20; ++i) {
      const Interval iv = gen.interval(false);
      const Formula psi = gen.any(2);
      check_same(robustness_trace(s, Formula::until(Formula::truth(), psi, iv)),
                 robustness_trace(s, Formula::eventually(psi, iv)));
    }
  }
  SUBCASE("single sample") {
    const Signal s = Signal::from_states({{0.3, -0.4}});
    const Formula psi =
        Formula::predicate({mu::Coordinate{1}, Comparison::Greater, {0, {}}});
    CHECK(until_trace(s, x0_gt(0), psi, {}).at(0, 0) == -0.4);
  }
}

TEST_CASE("integral") {
  const Signal s = Signal::scalar({1, 2, 3});
  CHECK(integral_trace(s, x0_gt(0), {0, 2}).at(0, 0) == 6.0);

  const Signal fine = Signal::scalar({1, 2, 3}, 0.1);
  CHECK(integral_trace(fine, x0_gt(0), {0, 0.2}, {1.0, true}).at(0, 0) ==
        doctest::Approx(60.0).epsilon(1e-12));

  const Signal flat = Signal::scalar(std::vector<double>(10, 0.25));
  const auto tr = integral_trace(flat, x0_gt(0), {1, 4});
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(tr.at(0, i) == 1.0);

  CHECK_THROWS_AS(Formula::integral(x0_gt(0), {}), InvalidArgument);
}

TEST_CASE("integral saturates at rho_max") {
  const Signal s = Signal::scalar({1, 2, 3, 4});
  EvalConfig cfg;
  cfg.rho_max = 5.0;
  const auto tr = integral_trace(s, x0_gt(0), {0, 2}, {}, cfg);
  CHECK(row(tr) == std::vector<double>{5, 5, 5, 5});
  CHECK(row(oracle_robustness(s, Formula::integral(x0_gt(0), {0, 2}), cfg)) == row(tr));
  const auto neg = integral_trace(s, x0_gt(0), {0, 2}, {-1.0, false}, cfg);
  CHECK(neg.at(0, 0) == -5.0);
  const Formula top = Formula::integral(Formula::truth(), {0, 3});
  CHECK(robustness(s, top, cfg)[0] == 5.0);
  CHECK(robustness(s, Formula::until(Formula::truth(), top), cfg)[0] ==
        robustness(s, Formula::eventually(top), cfg)[0]);
}

TEST_CASE("true until equals eventually") {
  std::mt19937_64 rng(8);
  FormulaGen gen(rng, 2);
  for (int i = 0; i < 200; ++i) {
    const Formula phi = gen.any(3);
    const Interval iv = gen.interval(false);
    const Signal s = random_signal(rng, 1 + gen.pick(3), 1 + gen.pick(30), 2, 1.0,
                                   gen.pick(2) == 0);
    check_same(robustness_trace(s, Formula::until(Formula::truth(), phi, iv)),
               robustness_trace(s, Formula::eventually(phi, iv)));
  }
}

TEST_CASE("Boolean satisfaction") {
  const Signal half = Signal::scalar({0.5});
  CHECK_FALSE(satisfies(half, x0_gt(0.5)));
  CHECK(satisfies(half, x0_ge(0.5)));
  CHECK(satisfies(kTable1, Formula::eventually(x0_gt(0), {0, 2})));
  CHECK_FALSE(satisfies(kTable1, Formula::negation(Formula::truth())));

  std::mt19937_64 rng(11);
  FormulaGen gen(rng, 2);
  for (int i = 0; i < 100; ++i) {
    const Signal s = random_signal(rng, 1, 15, 2);
    const Formula f = gen.any(3);
    const double rho = robustness(s, f)[0];
    if (rho != 0.0)
      CHECK(satisfies(s, f) == (rho > 0.0));
  }
}

TEST_CASE("errors") {
  const Formula f = Formula::predicate({mu::Coordinate{3}, Comparison::Greater, {0, {}}});
  CHECK_THROWS_AS(robustness(kTable1, f), EvalError);
  const Signal fine = Signal::scalar({1, 2, 3}, 0.3);
  CHECK_THROWS_AS(robustness(fine, Formula::eventually(x0_gt(0), {0, 0.5})),
                  InvalidArgument);
}

TEST_CASE("padding") {
  const Signal flat = Signal::scalar(std::vector<double>(8, 0.75));
  const auto tr = robustness_trace(flat, Formula::eventually(x0_gt(0), {0, 3}));
  for (std::size_t i = 5; i < 8; ++i)
    CHECK(tr.at(0, i) == 0.75);

  EvalConfig cfg;
  cfg.padding = Padding::constant(-5.0);
  const auto c = robustness_trace(kTable1, Formula::always(x0_gt(0), {0, 2}), cfg);
  CHECK(c.at(0, 5) == -5.0);
  CHECK(c.at(0, 4) == -5.0);
  CHECK(c.at(0, 3) == 1.0);
  CHECK(c.at(0, 0) == 1.0);
  CHECK(c.row(0)[0] == oracle_robustness(kTable1, Formula::always(x0_gt(0), {0, 2}), cfg).at(0, 0));
}

TEST_CASE("oracle agreement on random formulas") {
  std::mt19937_64 rng(2024);
  FormulaGen gen(rng, 2);
  gen.with_parameters = true;
  for (int i = 0; i < 150; ++i) {
    const Signal s = random_signal(rng, 1 + gen.pick(4), 1 + gen.pick(30), 2,
                                   1.0, gen.pick(2) == 0);
    const Formula f = gen.any(4);
    EvalConfig cfg;
    if (gen.pick(3) == 0)
      cfg.padding = Padding::constant(gen.number(-2, 2));
    ParamValues params{{"p0", {0.3}}};
    check_same(robustness_trace(s, f, cfg, params),
               oracle_robustness(s, f, cfg, params));
  }
}

TEST_CASE("negation flips the trace in every mode") {
  std::mt19937_64 rng(5);
  FormulaGen gen(rng, 1);
  for (auto mode : {Approximation::Exact, Approximation::SoftMax,
                    Approximation::LogSumExp}) {
    EvalConfig cfg;
    cfg.mode = mode;
    cfg.w = 2.0;
    for (int i = 0; i < 20; ++i) {
      const Signal s = random_signal(rng, 2, 12, 1);
      const Formula f = gen.any(3);
      const auto a = robustness_trace(s, f, cfg);
      const auto b = robustness_trace(s, Formula::negation(f), cfg);
      for (std::size_t k = 0; k < a.values.size(); ++k)
        CHECK(b.values[k] == -a.values[k]);
    }
  }
}

TEST_CASE("soft mode approaches exact as w grows") {
  const Formula f = Formula::eventually(x0_gt(0), {1, 3});
  EvalConfig cfg;
  cfg.mode = Approximation::SoftMax;
  cfg.w = 200.0;
  CHECK(robustness(kTable1, f, cfg)[0] == doctest::Approx(2.0).epsilon(1e-6));
  cfg.w = 0.0;
  CHECK(robustness(kTable1, f, cfg)[0] == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("differentiable evaluation matches the plain engine") {
  std::mt19937_64 rng(99);
  FormulaGen gen(rng, 2);
  gen.with_parameters = true;
  for (auto mode : {Approximation::Exact, Approximation::SoftMax,
                    Approximation::LogSumExp}) {
    EvalConfig cfg;
    cfg.mode = mode;
    cfg.w = 1.5;
    for (int i = 0; i < 40; ++i) {
      const Signal s = random_signal(rng, 3, 1 + gen.pick(15), 2, 1.0,
                                     gen.pick(2) == 0);
      const Formula f = gen.any(3);
      const ParamValues params{{"p1", {0.1, -0.2, 0.3}}};
      const auto plain = robustness(s, f, cfg, params);
      const auto diff = robustness_gradient(s, f, cfg, params);
      for (std::size_t b = 0; b < s.batch(); ++b)
        CHECK(diff.robustness[b] == doctest::Approx(plain[b]).epsilon(1e-12));
    }
  }
}

TEST_CASE("always gradient is one-hot at the first minimum") {
  const auto g = robustness_gradient(kTable1, Formula::always(x0_gt(0)));
  CHECK(g.robustness[0] == 1.0);
  CHECK(g.signal == std::vector<double>{1, 0, 0, 0, 0, 0});
}

TEST_CASE("parameter gradient") {
  Predicate p{mu::Coordinate{0}, Comparison::Less, {0.0, std::string("eps")}};
  const Formula f = Formula::always(Formula::predicate(p));
  const auto g = robustness_gradient(kTable1, f, {}, {{"eps", {4.0}}});
  CHECK(g.robustness[0] == 1.0);
  CHECK(g.params.at("eps") == std::vector<double>{1.0});
  CHECK(g.signal == std::vector<double>{0, 0, 0, 0, -1, 0});
}

TEST_CASE("thread count does not change results") {
  std::mt19937_64 rng(3);
  const Signal s = random_signal(rng, 16, 40, 1);
  FormulaGen gen(rng, 1);
  const Formula f = gen.any(4);
  setenv("STLGRAD_THREADS", "1", 1);
  const auto a = robustness_trace(s, f);
  setenv("STLGRAD_THREADS", "4", 1);
  const auto b = robustness_trace(s, f);
  unsetenv("STLGRAD_THREADS");
  check_same(a, b);
}

} // TEST_SUITE
