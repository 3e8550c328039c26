#include "stlgrad/smooth.hpp"

#include "stlgrad/core.hpp"

#include <algorithm>
#include <cmath>

namespace stlgrad {

namespace {

void check_input(std::span<const double> x, double w) {
  if (x.empty())
    throw InvalidArgument("soft max/min of an empty vector");
  if (!(w >= 0.0))
    throw InvalidArgument("soft max/min needs w >= 0");
}

std::size_t extremal_index(Extremum which, std::span<const double> x) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (which == Extremum::Max ? x[i] > x[arg] : x[i] < x[arg])
      arg = i;
  }
  return arg;
}

// Softmax-weighted average with signed scale s = +w (max) or -w (min).
double weighted_average(std::span<const double> x, double s, double anchor,
                        std::span<double> partials) {
  double z = 0.0;
  double num = 0.0;
  double lo = x[0], hi = x[0];
  for (double v : x) {
    const double e = std::exp(s * (v - anchor));
    z += e;
    num += v * e;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double r = std::clamp(num / z, lo, hi);
  if (!partials.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = std::exp(s * (x[i] - anchor)) / z;
      partials[i] = p * (1.0 + s * (x[i] - r));
    }
  }
  return r;
}

double log_sum_exp(std::span<const double> x, double s, double anchor,
                   std::span<double> partials) {
  double z = 0.0;
  for (double v : x)
    z += std::exp(s * (v - anchor));
  if (!partials.empty())
    for (std::size_t i = 0; i < x.size(); ++i)
      partials[i] = std::exp(s * (x[i] - anchor)) / z;
  return anchor + std::log(z) / s;
}

} // namespace

double soft_max(std::span<const double> x, double w) {
  check_input(x, w);
  return reduce({Extremum::Max, Smoothing::SoftMax, w}, x);
}

double soft_min(std::span<const double> x, double w) {
  check_input(x, w);
  return reduce({Extremum::Min, Smoothing::SoftMax, w}, x);
}

double logsumexp_max(std::span<const double> x, double w) {
  check_input(x, w);
  if (w == 0.0)
    throw InvalidArgument("logsumexp needs w > 0");
  return reduce({Extremum::Max, Smoothing::LogSumExp, w}, x);
}

double logsumexp_min(std::span<const double> x, double w) {
  check_input(x, w);
  if (w == 0.0)
    throw InvalidArgument("logsumexp needs w > 0");
  return reduce({Extremum::Min, Smoothing::LogSumExp, w}, x);
}

double reduce(const Reduction &r, std::span<const double> x,
              std::span<double> partials, std::size_t *arg) {
  if (x.empty())
    throw InvalidArgument("reduction over an empty set");
  const std::size_t best = extremal_index(r.which, x);
  if (arg)
    *arg = best;
  const double s = r.which == Extremum::Max ? r.w : -r.w;
  switch (r.smoothing) {
  case Smoothing::None:
    if (!partials.empty()) {
      std::fill(partials.begin(), partials.end(), 0.0);
      partials[best] = 1.0;
    }
    return x[best];
  case Smoothing::SoftMax:
    return weighted_average(x, s, x[best], partials);
  case Smoothing::LogSumExp:
    return log_sum_exp(x, s, x[best], partials);
  }
  return x[best];
}

double reduce2(const Reduction &r, double a, double b) {
  if (r.smoothing == Smoothing::None) {
    if (r.which == Extremum::Max)
      return b > a ? b : a;
    return b < a ? b : a;
  }
  const double pair[2] = {a, b};
  return reduce(r, pair);
}

} // namespace stlgrad
