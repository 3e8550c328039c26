#include "doctest.h"

#include "stlgrad/core.hpp"
#include "stlgrad/smooth.hpp"

#include <algorithm>
#include <random>
#include <vector>

using namespace stlgrad;

TEST_SUITE("smooth") {

TEST_CASE("soft max limits") {
  const std::vector<double> x{1, 2, 3};
  CHECK(soft_max(x, 0.0) == 2.0);
  CHECK(soft_min(x, 0.0) == 2.0);
  CHECK(std::abs(soft_max(x, 100.0) - 3.0) < 1e-6);
  CHECK(std::abs(soft_min(x, 100.0) - 1.0) < 1e-6);
  const std::vector<double> zeros{0, 0};
  for (double w : {0.0, 1.0, 50.0})
    CHECK(soft_max(zeros, w) == 0.0);
}

TEST_CASE("logsumexp") {
  const std::vector<double> x{1, 2, 3};
  CHECK(logsumexp_max(x, 1.0) ==
        doctest::Approx(std::log(std::exp(1) + std::exp(2) + std::exp(3))));
  CHECK(logsumexp_max(x, 1.0) >= 3.0);
  CHECK(logsumexp_min(x, 1.0) <= 1.0);
  CHECK_THROWS_AS(logsumexp_max(x, 0.0), InvalidArgument);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(soft_max({}, 1.0), InvalidArgument);
  const std::vector<double> x{1};
  CHECK_THROWS_AS(soft_max(x, -1.0), InvalidArgument);
}

TEST_CASE("no overflow for large w times range") {
  const std::vector<double> x{-5, 0, 5};
  CHECK(soft_max(x, 700.0) == doctest::Approx(5.0));
  CHECK(soft_min(x, 700.0) == doctest::Approx(-5.0));
}

TEST_CASE("bounded by min and max, monotone in w") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 2.0);
  const std::vector<double> grid{0, 0.1, 0.5, 1, 2, 5, 10, 50};
  for (int k = 0; k < 500; ++k) {
    std::vector<double> x(1 + rng() % 8);
    for (auto &v : x)
      v = n(rng);
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    double prev_max = -kInfinity, prev_min = kInfinity;
    for (double w : grid) {
      const double smax = soft_max(x, w);
      const double smin = soft_min(x, w);
      CHECK(smax >= lo);
      CHECK(smax <= hi);
      CHECK(smin >= lo);
      CHECK(smin <= hi);
      CHECK(smax >= prev_max - 1e-12);
      CHECK(smin <= prev_min + 1e-12);
      prev_max = smax;
      prev_min = smin;
    }
  }
}

TEST_CASE("partials sum to one") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(2 + rng() % 6), p(x.size());
    for (auto &v : x)
      v = n(rng);
    const double w = 0.1 * static_cast<double>(rng() % 100);
    for (auto s : {Smoothing::SoftMax, Smoothing::LogSumExp}) {
      if (s == Smoothing::LogSumExp && w == 0.0)
        continue;
      reduce({Extremum::Max, s, w}, x, p);
      double total = 0;
      for (double v : p)
        total += v;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact reduction ties go to the first index") {
  const std::vector<double> x{1, 3, 3};
  std::vector<double> p(3);
  std::size_t arg = 99;
  CHECK(reduce({Extremum::Max}, x, p, &arg) == 3.0);
  CHECK(arg == 1);
  CHECK(p == std::vector<double>{0, 1, 0});
  CHECK(reduce2({Extremum::Min}, 2.0, 2.0) == 2.0);
}

} // TEST_SUITE
