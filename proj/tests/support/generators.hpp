#pragma once

// Random formulas and signals shared by the unit and acceptance tests.

#include "stlgrad/core.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace stlgrad::testing {

class FormulaGen {
public:
  FormulaGen(std::mt19937_64 &rng, std::size_t dim, double dt = 1.0)
      : rng_(rng), dim_(dim), dt_(dt) {}

  bool with_parameters = false;
  std::size_t max_steps = 8;

  Formula any(int depth) {
    if (depth <= 1)
      return leaf();
    switch (pick(10)) {
    case 0:
      return leaf();
    case 1:
      return Formula::negation(any(depth - 1));
    case 2:
      return Formula::conjunction(any(depth - 1), any(depth - 1));
    case 3:
      return Formula::disjunction(any(depth - 1), any(depth - 1));
    case 4:
      return Formula::implication(any(depth - 1), any(depth - 1));
    case 5:
      return Formula::eventually(any(depth - 1), interval(false));
    case 6:
      return Formula::always(any(depth - 1), interval(false));
    case 7:
      return Formula::until(any(depth - 1), any(depth - 1), interval(false));
    case 8:
      return Formula::integral(any(depth - 1), interval(true), weight());
    default:
      return Formula::negation(Formula::eventually(any(depth - 1)));
    }
  }

  // Covers every operator at least once within depth 4.
  Formula covering(int depth) {
    Formula f = any(depth - 2);
    switch (pick(4)) {
    case 0:
      return Formula::until(f, Formula::integral(leaf(), interval(true)),
                            interval(false));
    case 1:
      return Formula::integral(Formula::until(leaf(), f, interval(false)),
                               interval(true), weight());
    case 2:
      return Formula::always(Formula::until(f, leaf()), interval(false));
    default:
      return Formula::until(Formula::integral(f, interval(true)), leaf(),
                            interval(false));
    }
  }

  Formula leaf() {
    if (pick(12) == 0)
      return Formula::truth();
    return Formula::predicate(predicate());
  }

  Predicate predicate() {
    Predicate p;
    p.comparison = static_cast<Comparison>(pick(4));
    p.threshold.value = number(-1.0, 1.0);
    if (with_parameters && pick(4) == 0)
      p.threshold.parameter = "p" + std::to_string(pick(3));
    const std::size_t k = pick(dim_);
    switch (pick(6)) {
    case 0:
    case 1:
      p.mu = mu::Coordinate{k};
      break;
    case 2: {
      mu::Affine a;
      for (std::size_t i = 0; i < dim_; ++i) {
        if (i == k || pick(2) == 0) {
          a.indices.push_back(i);
          a.coeffs.push_back(number(-2.0, 2.0));
        }
      }
      a.offset = number(-1.0, 1.0);
      p.mu = a;
      break;
    }
    case 3: {
      mu::Norm n;
      for (std::size_t i = 0; i < dim_; ++i) {
        n.indices.push_back(i);
        n.center.push_back(number(-1.0, 1.0));
      }
      p.mu = n;
      break;
    }
    case 4:
      p.mu = mu::AbsDeviation{k, number(-1.0, 1.0)};
      break;
    default: {
      mu::BoxMargin b;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double lo = number(-1.0, 0.5);
        b.indices.push_back(i);
        b.lo.push_back(lo);
        b.hi.push_back(lo + number(0.0, 1.0));
      }
      p.mu = b;
      break;
    }
    }
    return p;
  }

  Interval interval(bool finite) {
    const std::size_t a = pick(max_steps / 2 + 1);
    if (!finite && pick(3) == 0)
      return Interval::unbounded_from(static_cast<double>(a) * dt_);
    const std::size_t b = a + pick(max_steps - a + 1);
    return {static_cast<double>(a) * dt_, static_cast<double>(b) * dt_};
  }

  IntegralWeight weight() {
    if (pick(2) == 0)
      return {};
    return {number(0.1, 2.0), pick(2) == 0};
  }

  // Two decimals keeps printed thresholds short and exactly round-trippable.
  double number(double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    return std::round(u(rng_) * 100.0) / 100.0;
  }

  std::size_t pick(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

private:
  std::mt19937_64 &rng_;
  std::size_t dim_;
  double dt_;
};

// Parameter thresholds print by name only, so their initial value reads back
// as 0 unless the parser is told otherwise.
inline Formula zero_parameters(const Formula &f) {
  switch (f.op()) {
  case Op::True:
    return f;
  case Op::Pred: {
    Predicate p = f.predicate();
    if (p.threshold.parameter)
      p.threshold.value = 0.0;
    return Formula::predicate(p);
  }
  case Op::Not:
    return Formula::negation(zero_parameters(f.child(0)));
  case Op::And:
    return Formula::conjunction(zero_parameters(f.child(0)), zero_parameters(f.child(1)));
  case Op::Or:
    return Formula::disjunction(zero_parameters(f.child(0)), zero_parameters(f.child(1)));
  case Op::Implies:
    return Formula::implication(zero_parameters(f.child(0)), zero_parameters(f.child(1)));
  case Op::Eventually:
    return Formula::eventually(zero_parameters(f.child(0)), f.interval());
  case Op::Always:
    return Formula::always(zero_parameters(f.child(0)), f.interval());
  case Op::Integral:
    return Formula::integral(zero_parameters(f.child(0)), f.interval(), f.weight());
  case Op::Until:
    return Formula::until(zero_parameters(f.child(0)), zero_parameters(f.child(1)),
                          f.interval());
  }
  return f;
}

inline Signal random_signal(std::mt19937_64 &rng, std::size_t batch,
                            std::size_t time, std::size_t dim,
                            double dt = 1.0, bool ragged = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(batch * time * dim);
  for (auto &x : v)
    x = n(rng);
  std::vector<std::size_t> lengths(batch, time);
  if (ragged) {
    std::uniform_int_distribution<std::size_t> len(1, time);
    for (auto &L : lengths)
      L = len(rng);
    lengths[0] = time;
  }
  return Signal(batch, time, dim, std::move(v), 0.0, dt, lengths);
}

} // namespace stlgrad::testing
