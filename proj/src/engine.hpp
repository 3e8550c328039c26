#pragma once

// Backend-generic robustness evaluation.
//
// Temporal operators consume their subformula trace backwards in time
// through recurrent cells:
//   [0, inf)  carry h;            o_t = op(rho_t, h)
//   [0, b]    window h of N_b-1;  o_t = op(rho_t, h_1..h_{N_b-1})
//   [a, inf)  carry c, window d;  o_t = op(d_1, c)
//   [a, b]    window h of N_b-1;  o_t = op(h_1..h_M)
// after which the window drops h_1 and appends rho_t. Samples past the end of
// the signal are the padding value, which is also the initial cell state.
//
// A backend supplies Value (one robustness sample per batch element),
// Window (a (B, K) hidden window) and the primitive operations used below.

#include "stlgrad/core.hpp"
#include "stlgrad/semantics.hpp"
#include "stlgrad/smooth.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace stlgrad::detail {

inline Smoothing smoothing_of(Approximation mode) {
  switch (mode) {
  case Approximation::Exact:
    return Smoothing::None;
  case Approximation::SoftMax:
    return Smoothing::SoftMax;
  case Approximation::LogSumExp:
    return Smoothing::LogSumExp;
  }
  return Smoothing::None;
}

template <class Ops> class Engine {
public:
  using Value = typename Ops::Value;
  using Window = typename Ops::Window;
  using Trace = std::vector<Value>;

  Engine(Ops &ops, const EvalConfig &cfg, double dt,
         const CellObserver *observer = nullptr)
      : ops_(ops), cfg_(cfg), dt_(dt), observer_(observer) {}

  Trace eval(const Formula &f) {
    switch (f.op()) {
    case Op::True:
      return Trace(ops_.length(), ops_.constant(cfg_.rho_max));
    case Op::Pred:
      return ops_.predicate(f.predicate());
    case Op::Not: {
      Trace x = eval(f.child(0));
      for (auto &v : x)
        v = ops_.neg(v);
      return x;
    }
    case Op::And:
      return pointwise(Extremum::Min, eval(f.child(0)), eval(f.child(1)));
    case Op::Or:
      return pointwise(Extremum::Max, eval(f.child(0)), eval(f.child(1)));
    case Op::Implies: {
      Trace lhs = eval(f.child(0));
      for (auto &v : lhs)
        v = ops_.neg(v);
      return pointwise(Extremum::Max, std::move(lhs), eval(f.child(1)));
    }
    case Op::Eventually:
      return temporal(f, Extremum::Max, eval(f.child(0)));
    case Op::Always:
      return temporal(f, Extremum::Min, eval(f.child(0)));
    case Op::Integral:
      return integral(f, eval(f.child(0)));
    case Op::Until:
      return until(f, eval(f.child(0)), eval(f.child(1)));
    }
    throw EvalError("unknown formula node");
  }

private:
  Reduction reduction(Extremum e) const {
    return {e, smoothing_of(cfg_.mode), cfg_.w};
  }

  Trace pointwise(Extremum e, Trace lhs, const Trace &rhs) {
    const Reduction r = reduction(e);
    for (std::size_t i = 0; i < lhs.size(); ++i)
      lhs[i] = ops_.reduce2(r, lhs[i], rhs[i]);
    return lhs;
  }

  void observe(const Formula &f, std::size_t step, std::size_t t,
               std::optional<double> carry, std::vector<double> hidden,
               const Value &out) {
    if (!observer_ || !*observer_)
      return;
    CellRecord rec{f.id(), step, t, carry, std::move(hidden),
                   ops_.scalar(out)};
    (*observer_)(rec);
  }

  Trace temporal(const Formula &f, Extremum e, Trace input) {
    const IntervalCounts counts = interval_to_counts(f.interval(), dt_);
    auto [in, pad] = ops_.pad(std::move(input));
    const std::size_t T = in.size();
    const Reduction r = reduction(e);
    Trace out(T, pad);
    const bool lower_zero = counts.n_a == 1;

    if (lower_zero && !counts.n_b) {
      Value h = pad;
      for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = T - 1 - step;
        const Value o = ops_.reduce2(r, in[t], h);
        if (observer_)
          observe(f, step, t, std::nullopt, {ops_.scalar(h)}, o);
        out[t] = o;
        h = o;
      }
    } else if (lower_zero) {
      const std::size_t K = *counts.n_b - 1;
      if (K == 0)
        return in;
      Window h = ops_.make_window(pad, K);
      for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = T - 1 - step;
        const Value o = ops_.window_reduce(r, h, K, in[t]);
        if (observer_)
          observe(f, step, t, std::nullopt, ops_.snapshot(h), o);
        out[t] = o;
        ops_.shift(h, in[t]);
      }
    } else if (!counts.n_b) {
      const std::size_t K = counts.n_a - 1;
      Value c = pad;
      Window d = ops_.make_window(pad, K);
      for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = T - 1 - step;
        const Value o = ops_.reduce2(r, ops_.window_front(d), c);
        if (observer_)
          observe(f, step, t, ops_.scalar(c), ops_.snapshot(d), o);
        out[t] = o;
        c = o;
        ops_.shift(d, in[t]);
      }
    } else {
      const std::size_t K = *counts.n_b - 1;
      const std::size_t M = *counts.m;
      Window h = ops_.make_window(pad, K);
      for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = T - 1 - step;
        const Value o = ops_.window_reduce(r, h, M, std::nullopt);
        if (observer_)
          observe(f, step, t, std::nullopt, ops_.snapshot(h), o);
        out[t] = o;
        ops_.shift(h, in[t]);
      }
    }
    return out;
  }

  // For each start t: max over t' in [t+a, t+b] of
  //   min(psi_t', min over t'' in [t, t'] of phi_t'').
  // Indices past the end collapse onto the single padded sample at T.
  Trace until(const Formula &f, Trace lhs, Trace rhs) {
    const IntervalCounts counts = interval_to_counts(f.interval(), dt_);
    auto [phi, phi_pad] = ops_.pad(std::move(lhs));
    auto [psi, psi_pad] = ops_.pad(std::move(rhs));
    const std::size_t T = phi.size();
    const Reduction rmin = reduction(Extremum::Min);
    const Reduction rmax = reduction(Extremum::Max);
    const std::size_t na = counts.lower_steps();
    Trace out;
    out.reserve(T);
    Trace candidates;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t lo = std::min(t + na, T);
      const std::size_t hi =
          counts.n_b ? std::min(t + *counts.upper_steps(), T) : T;
      std::optional<Value> running;
      std::optional<Value> best;
      candidates.clear();
      for (std::size_t k = t; k <= hi; ++k) {
        const Value &phi_k = k < T ? phi[k] : phi_pad;
        running = running ? ops_.reduce2(rmin, *running, phi_k) : phi_k;
        if (k < lo)
          continue;
        const Value &psi_k = k < T ? psi[k] : psi_pad;
        Value cand = ops_.reduce2(rmin, psi_k, *running);
        if (rmax.associative())
          best = best ? ops_.reduce2(rmax, *best, cand) : cand;
        else
          candidates.push_back(std::move(cand));
      }
      out.push_back(rmax.associative() ? *best
                                       : ops_.reduce(rmax, candidates));
    }
    return out;
  }

  Trace integral(const Formula &f, Trace input) {
    const IntervalCounts counts = interval_to_counts(f.interval(), dt_);
    auto [in, pad] = ops_.pad(std::move(input));
    const std::size_t T = in.size();
    const std::size_t na = counts.lower_steps();
    const std::size_t nb = *counts.upper_steps();
    const double weight = f.weight().value(dt_);
    Trace out;
    out.reserve(T);
    Trace window;
    for (std::size_t t = 0; t < T; ++t) {
      window.clear();
      for (std::size_t k = t + na; k <= t + nb; ++k)
        window.push_back(k < T ? in[k] : pad);
      out.push_back(ops_.clamp(ops_.weighted_sum(window, weight), cfg_.rho_max));
    }
    return out;
  }

  Ops &ops_;
  const EvalConfig &cfg_;
  double dt_;
  const CellObserver *observer_;
};

} // namespace stlgrad::detail
