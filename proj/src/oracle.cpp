#include "stlgrad/semantics.hpp"

#include <algorithm>
#include <unordered_map>

namespace stlgrad {

namespace detail {
double threshold_for(const Predicate &p, const ParamValues &params,
                     std::size_t b, std::size_t batch);
void check_inputs(std::size_t dim, double dt, const Formula &f,
                  const EvalConfig &cfg);
} // namespace detail

namespace {

class Oracle {
public:
  Oracle(const Signal &s, std::size_t b, const EvalConfig &cfg,
         const ParamValues &params)
      : s_(s), b_(b), cfg_(cfg), params_(params), L_(s.length(b)) {}

  double rho(const Formula &f, std::size_t t) {
    auto &memo = memo_[f.id()];
    if (memo.empty())
      memo.assign(L_, std::nullopt);
    if (!memo[t])
      memo[t] = compute(f, t);
    return *memo[t];
  }

private:
  // Sample k of the extended trace: the pad value from L on.
  double ext(const Formula &f, std::size_t k) {
    if (k < L_)
      return rho(f, k);
    if (cfg_.padding.kind == Padding::Kind::LastValue)
      return rho(f, L_ - 1);
    return cfg_.padding.value;
  }

  double compute(const Formula &f, std::size_t t) {
    switch (f.op()) {
    case Op::True:
      return cfg_.rho_max;
    case Op::Pred: {
      const Predicate &p = f.predicate();
      return p.robustness(s_.state(b_, t),
                          detail::threshold_for(p, params_, b_, s_.batch()));
    }
    case Op::Not:
      return -rho(f.child(0), t);
    case Op::And:
      return std::min(rho(f.child(0), t), rho(f.child(1), t));
    case Op::Or:
      return std::max(rho(f.child(0), t), rho(f.child(1), t));
    case Op::Implies:
      return std::max(-rho(f.child(0), t), rho(f.child(1), t));
    case Op::Eventually:
    case Op::Always: {
      const auto c = interval_to_counts(f.interval(), s_.dt());
      const std::size_t lo = std::min(t + c.lower_steps(), L_);
      const std::size_t hi = c.n_b ? std::min(t + *c.upper_steps(), L_) : L_;
      double acc = ext(f.child(0), lo);
      for (std::size_t k = lo + 1; k <= hi; ++k) {
        const double v = ext(f.child(0), k);
        acc = f.op() == Op::Eventually ? std::max(acc, v) : std::min(acc, v);
      }
      return acc;
    }
    case Op::Until: {
      const auto c = interval_to_counts(f.interval(), s_.dt());
      const std::size_t lo = std::min(t + c.lower_steps(), L_);
      const std::size_t hi = c.n_b ? std::min(t + *c.upper_steps(), L_) : L_;
      double best = -kInfinity;
      for (std::size_t tp = lo; tp <= hi; ++tp) {
        double inner = kInfinity;
        for (std::size_t tpp = t; tpp <= tp; ++tpp)
          inner = std::min(inner, ext(f.child(0), tpp));
        best = std::max(best, std::min(ext(f.child(1), tp), inner));
      }
      return best;
    }
    case Op::Integral: {
      const auto c = interval_to_counts(f.interval(), s_.dt());
      const double w = f.weight().value(s_.dt());
      double acc = 0.0;
      for (std::size_t k = t + c.lower_steps(); k <= t + *c.upper_steps(); ++k)
        acc += w * ext(f.child(0), k);
      return std::clamp(acc, -cfg_.rho_max, cfg_.rho_max);
    }
    }
    throw EvalError("unknown formula node");
  }

  const Signal &s_;
  std::size_t b_;
  const EvalConfig &cfg_;
  const ParamValues &params_;
  std::size_t L_;
  std::unordered_map<const void *, std::vector<std::optional<double>>> memo_;
};

} // namespace

RobustnessTrace oracle_robustness(const Signal &signal, const Formula &f,
                                  const EvalConfig &cfg,
                                  const ParamValues &params) {
  detail::check_inputs(signal.dim(), signal.dt(), f, cfg);
  if (cfg.mode != Approximation::Exact)
    throw InvalidArgument("the oracle evaluates exact semantics only");
  RobustnessTrace tr;
  tr.batch = signal.batch();
  tr.time = signal.time();
  tr.values.assign(tr.batch * tr.time,
                   std::numeric_limits<double>::quiet_NaN());
  tr.lengths = signal.lengths();
  tr.t0 = signal.t0();
  tr.dt = signal.dt();
  tr.formula = f;
  for (std::size_t b = 0; b < signal.batch(); ++b) {
    Oracle o(signal, b, cfg, params);
    for (std::size_t t = 0; t < signal.length(b); ++t)
      tr.values[b * tr.time + t] = o.rho(f, t);
  }
  return tr;
}

} // namespace stlgrad
