#pragma once

#include <cstddef>
#include <span>

namespace stlgrad {

enum class Extremum { Max, Min };

/// How a max/min site is evaluated.
enum class Smoothing { None, SoftMax, LogSumExp };

struct Reduction {
  Extremum which = Extremum::Max;
  Smoothing smoothing = Smoothing::None;
  double w = 0.0;

  /// Pairwise and running reductions agree with set reductions.
  bool associative() const { return smoothing == Smoothing::None; }
};

/// Softmax-weighted average sum_i x_i e^{w x_i} / sum_j e^{w x_j}.
/// Exponentials are shifted by max(x). Throws on empty input or w < 0.
double soft_max(std::span<const double> x, double w);
double soft_min(std::span<const double> x, double w);

/// (1/w) log sum_i e^{w x_i} and its min counterpart; w must be positive.
double logsumexp_max(std::span<const double> x, double w);
double logsumexp_min(std::span<const double> x, double w);

/// Evaluates one reduction site. When `partials` is non-empty it receives
/// d(result)/d(x_i). In exact mode the whole subgradient goes to the first
/// extremal index, which is also written to `arg` when given.
double reduce(const Reduction &r, std::span<const double> x,
              std::span<double> partials = {}, std::size_t *arg = nullptr);

/// Two-operand reduction; ties go to `a`.
double reduce2(const Reduction &r, double a, double b);

} // namespace stlgrad
