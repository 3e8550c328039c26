#include "stlgrad/semantics.hpp"

#include "engine.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace stlgrad {

namespace detail {

double threshold_for(const Predicate &p, const ParamValues &params,
                     std::size_t b, std::size_t batch) {
  if (!p.threshold.parameter)
    return p.threshold.value;
  auto it = params.find(*p.threshold.parameter);
  if (it == params.end())
    return p.threshold.value;
  const auto &v = it->second;
  if (v.size() == 1)
    return v[0];
  if (v.size() == batch)
    return v[b];
  throw EvalError("parameter '" + it->first + "' has " +
                  std::to_string(v.size()) + " values for a batch of " +
                  std::to_string(batch));
}

void check_inputs(std::size_t dim, double dt, const Formula &f,
                  const EvalConfig &cfg) {
  cfg.validate();
  if (f.required_dim() > dim)
    throw EvalError("formula references x" +
                    std::to_string(f.required_dim() - 1) +
                    " but the signal has dimension " + std::to_string(dim));
  if (!(dt > 0.0))
    throw EvalError("sampling period must be positive");
}

} // namespace detail

namespace {

using detail::Engine;

// One batch element, values as plain doubles.
class PlainOps {
public:
  using Value = double;
  struct Window {
    std::vector<double> buf;
    std::size_t head = 0;
    double at(std::size_t j) const { return buf[(head + j) % buf.size()]; }
  };

  PlainOps(const Signal &s, std::size_t b, const EvalConfig &cfg,
           const ParamValues &params)
      : s_(s), b_(b), cfg_(cfg), params_(params) {}

  std::size_t length() const { return s_.length(b_); }
  double constant(double v) const { return v; }
  double neg(double v) const { return -v; }
  double scalar(double v) const { return v; }

  std::vector<double> predicate(const Predicate &p) const {
    const double c = detail::threshold_for(p, params_, b_, s_.batch());
    std::vector<double> out(length());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = p.robustness(s_.state(b_, i), c);
    return out;
  }

  double reduce2(const Reduction &r, double a, double b) const {
    if (r.smoothing == Smoothing::None)
      return r.which == Extremum::Max ? (b > a ? b : a) : (b < a ? b : a);
    return stlgrad::reduce2(r, a, b);
  }

  double reduce(const Reduction &r, const std::vector<double> &x) const {
    return stlgrad::reduce(r, x);
  }

  double clamp(double v, double r) const { return std::clamp(v, -r, r); }

  double weighted_sum(const std::vector<double> &x, double w) const {
    double acc = 0.0;
    for (double v : x)
      acc += w * v;
    return acc;
  }

  std::pair<std::vector<double>, double> pad(std::vector<double> trace) const {
    const double p = cfg_.padding.kind == Padding::Kind::LastValue
                         ? trace.back()
                         : cfg_.padding.value;
    return {std::move(trace), p};
  }

  Window make_window(double fill, std::size_t k) const {
    return {std::vector<double>(k, fill), 0};
  }

  void shift(Window &w, double u) const {
    w.buf[w.head] = u;
    w.head = (w.head + 1) % w.buf.size();
  }

  double window_front(const Window &w) const { return w.at(0); }

  double window_reduce(const Reduction &r, const Window &w, std::size_t count,
                       std::optional<double> lead) {
    if (r.associative()) {
      double best = lead ? *lead : w.at(count - 1);
      for (std::size_t j = lead ? count : count - 1; j-- > 0;) {
        const double v = w.at(j);
        if (r.which == Extremum::Max ? v > best : v < best)
          best = v;
      }
      return best;
    }
    scratch_.clear();
    if (lead)
      scratch_.push_back(*lead);
    for (std::size_t j = count; j-- > 0;)
      scratch_.push_back(w.at(j));
    return stlgrad::reduce(r, scratch_);
  }

  std::vector<double> snapshot(const Window &w) const {
    std::vector<double> out(w.buf.size());
    for (std::size_t j = 0; j < out.size(); ++j)
      out[j] = w.at(j);
    return out;
  }

private:
  const Signal &s_;
  std::size_t b_;
  const EvalConfig &cfg_;
  const ParamValues &params_;
  std::vector<double> scratch_;
};

// Whole batch on a tape; Value is a (B) column, Window a (B, K) array.
class TapeOps {
public:
  using Value = ad::Var;
  using Window = ad::Var;

  TapeOps(const ad::Var &signal, const EvalConfig &cfg,
          const ParamVars &params)
      : x_(signal), cfg_(cfg), params_(params) {
    const auto &shape = signal.shape();
    B_ = shape[0];
    T_ = shape[1];
    n_ = shape[2];
  }

  std::size_t length() const { return T_; }
  std::size_t batch() const { return B_; }
  std::size_t dim() const { return n_; }

  ad::Var constant(double v) {
    auto it = constants_.find(v);
    if (it == constants_.end())
      it = constants_.emplace(v, x_.tape().constant(ad::Tensor({B_}, v))).first;
    return it->second;
  }

  ad::Var neg(const ad::Var &v) const { return ad::neg(v); }
  double scalar(const ad::Var &v) const { return v.value()[0]; }

  std::vector<ad::Var> predicate(const Predicate &p) {
    const std::size_t B = B_, T = T_, n = n_;
    std::vector<ad::NodeId> parents{x_.id()};
    std::optional<ad::Var> param;
    if (p.threshold.parameter) {
      if (auto it = params_.find(*p.threshold.parameter); it != params_.end()) {
        param = it->second;
        if (param->value().size() != 1 && param->value().size() != B)
          throw EvalError("parameter '" + it->first +
                          "' must have 1 or B values");
        parents.push_back(param->id());
      }
    }
    auto c_of = [p, param](std::size_t b) {
      if (!param)
        return p.threshold.value;
      const auto &v = param->value();
      return v.size() == 1 ? v[0] : v[b];
    };
    const auto &xv = x_.value();
    const bool branchy = std::holds_alternative<mu::AbsDeviation>(p.mu) ||
                         std::holds_alternative<mu::BoxMargin>(p.mu) ||
                         std::holds_alternative<mu::Norm>(p.mu);
    ad::Tensor value({B, T});
    for (std::size_t b = 0; b < B; ++b) {
      const double c = c_of(b);
      for (std::size_t i = 0; i < T; ++i) {
        const auto state = xv.data().subspan((b * T + i) * n, n);
        value[b * T + i] = p.robustness(state, c);
        if (branchy)
          x_.tape().note_branch(mu_branch(p.mu, state));
      }
    }
    const ad::Var x = x_;
    auto vjp = [p, x, param, B, T, n](const ad::Tensor &g, ad::GradSink &sink) {
      const double sign = is_lower_bound(p.comparison) ? 1.0 : -1.0;
      if (sink.wants(0)) {
        const auto &xv = x.value();
        ad::Tensor &gx = sink[0];
        std::vector<double> grad(n);
        for (std::size_t k = 0; k < B * T; ++k) {
          if (g[k] == 0.0)
            continue;
          mu_gradient(p.mu, xv.data().subspan(k * n, n), grad);
          for (std::size_t j = 0; j < n; ++j)
            gx[k * n + j] += sign * grad[j] * g[k];
        }
      }
      if (param && sink.wants(1)) {
        ad::Tensor &gc = sink[1];
        const bool broadcast = gc.size() == 1;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < T; ++i)
            gc[broadcast ? 0 : b] -= sign * g[b * T + i];
      }
    };
    ad::Var node = x_.tape().record(ad::OpKind::Custom, std::move(parents),
                                    std::move(value), std::move(vjp));
    std::vector<ad::Var> out;
    out.reserve(T);
    for (std::size_t i = 0; i < T; ++i)
      out.push_back(ad::select(node, 1, i));
    return out;
  }

  ad::Var reduce2(const Reduction &r, const ad::Var &a,
                  const ad::Var &b) const {
    const ad::Var pair[2] = {a, b};
    return ad::reduce(r, pair);
  }

  ad::Var reduce(const Reduction &r, const std::vector<ad::Var> &x) const {
    return ad::reduce(r, x);
  }

  ad::Var clamp(const ad::Var &v, double r) const { return ad::clamp(v, -r, r); }

  ad::Var weighted_sum(const std::vector<ad::Var> &x, double w) const {
    return ad::weighted_sum(x, w);
  }

  std::pair<std::vector<ad::Var>, ad::Var> pad(std::vector<ad::Var> trace) {
    if (cfg_.padding.kind == Padding::Kind::LastValue)
      return {trace, trace.back()};
    return {std::move(trace), constant(cfg_.padding.value)};
  }

  ad::Var make_window(const ad::Var &fill, std::size_t k) const {
    return ad::repeat(fill, k);
  }

  void shift(ad::Var &w, const ad::Var &u) const { w = ad::shift(w, u); }

  ad::Var window_front(const ad::Var &w) const { return ad::select(w, 1, 0); }

  ad::Var window_reduce(const Reduction &r, const ad::Var &w,
                        std::size_t count,
                        const std::optional<ad::Var> &lead) const {
    return ad::window_reduce(r, w, count, lead);
  }

  std::vector<double> snapshot(const ad::Var &w) const {
    const auto &v = w.value();
    const std::size_t K = v.dim(1);
    return {v.data().begin(), v.data().begin() + static_cast<long>(K)};
  }

private:
  ad::Var x_;
  const EvalConfig &cfg_;
  const ParamVars &params_;
  std::size_t B_ = 0, T_ = 0, n_ = 0;
  std::map<double, ad::Var> constants_;
};

std::vector<double> element_trace(const Signal &s, std::size_t b,
                                  const Formula &f, const EvalConfig &cfg,
                                  const ParamValues &params,
                                  const CellObserver *observer = nullptr) {
  PlainOps ops(s, b, cfg, params);
  Engine<PlainOps> engine(ops, cfg, s.dt(), observer);
  return engine.eval(f);
}

RobustnessTrace empty_trace(const Signal &s, const Formula &f) {
  RobustnessTrace tr;
  tr.batch = s.batch();
  tr.time = s.time();
  tr.values.assign(s.batch() * s.time(),
                   std::numeric_limits<double>::quiet_NaN());
  tr.lengths = s.lengths();
  tr.t0 = s.t0();
  tr.dt = s.dt();
  tr.formula = f;
  return tr;
}

// Boolean semantics on one element, same windowing as the quantitative one.
class BoolEval {
public:
  BoolEval(const Signal &s, std::size_t b, const EvalConfig &cfg,
           const ParamValues &params)
      : s_(s), b_(b), cfg_(cfg), params_(params), L_(s.length(b)) {}

  std::vector<char> eval(const Formula &f) {
    std::vector<char> out(L_);
    switch (f.op()) {
    case Op::True:
      std::fill(out.begin(), out.end(), 1);
      return out;
    case Op::Pred: {
      const double c =
          detail::threshold_for(f.predicate(), params_, b_, s_.batch());
      for (std::size_t i = 0; i < L_; ++i)
        out[i] = f.predicate().holds(s_.state(b_, i), c);
      return out;
    }
    case Op::Not: {
      out = eval(f.child(0));
      for (auto &v : out)
        v = !v;
      return out;
    }
    case Op::And:
    case Op::Or:
    case Op::Implies: {
      const auto l = eval(f.child(0));
      const auto r = eval(f.child(1));
      for (std::size_t i = 0; i < L_; ++i) {
        if (f.op() == Op::And)
          out[i] = l[i] && r[i];
        else if (f.op() == Op::Or)
          out[i] = l[i] || r[i];
        else
          out[i] = !l[i] || r[i];
      }
      return out;
    }
    case Op::Integral: {
      const auto rho = element_trace(s_, b_, f, exact(), params_);
      for (std::size_t i = 0; i < L_; ++i)
        out[i] = rho[i] > 0.0;
      return out;
    }
    case Op::Eventually:
    case Op::Always: {
      const auto in = eval(f.child(0));
      const char pad = pad_of(f.child(0), in);
      const auto counts = interval_to_counts(f.interval(), s_.dt());
      const bool any = f.op() == Op::Eventually;
      for (std::size_t t = 0; t < L_; ++t) {
        const auto [lo, hi] = window(t, counts);
        bool acc = !any;
        for (std::size_t k = lo; k <= hi; ++k) {
          const bool v = k < L_ ? in[k] : pad;
          acc = any ? (acc || v) : (acc && v);
        }
        out[t] = acc;
      }
      return out;
    }
    case Op::Until: {
      const auto phi = eval(f.child(0));
      const auto psi = eval(f.child(1));
      const char phi_pad = pad_of(f.child(0), phi);
      const char psi_pad = pad_of(f.child(1), psi);
      const auto counts = interval_to_counts(f.interval(), s_.dt());
      for (std::size_t t = 0; t < L_; ++t) {
        const auto [lo, hi] = window(t, counts);
        bool prefix = true;
        bool found = false;
        for (std::size_t k = t; k <= hi && prefix && !found; ++k) {
          prefix = k < L_ ? phi[k] : phi_pad;
          const bool target = k < L_ ? psi[k] : psi_pad;
          found = k >= lo && prefix && target;
        }
        out[t] = found;
      }
      return out;
    }
    }
    return out;
  }

private:
  EvalConfig exact() const {
    EvalConfig c = cfg_;
    c.mode = Approximation::Exact;
    return c;
  }

  char pad_of(const Formula &, const std::vector<char> &trace) const {
    if (cfg_.padding.kind == Padding::Kind::LastValue)
      return trace.back();
    return cfg_.padding.value > 0.0;
  }

  std::pair<std::size_t, std::size_t>
  window(std::size_t t, const IntervalCounts &c) const {
    const std::size_t lo = std::min(t + c.lower_steps(), L_);
    const std::size_t hi = c.n_b ? std::min(t + *c.upper_steps(), L_) : L_;
    return {lo, hi};
  }

  const Signal &s_;
  std::size_t b_;
  const EvalConfig &cfg_;
  const ParamValues &params_;
  std::size_t L_;
};

// Rows `rows` of a (B, ...) array; for rank >= 2 only the first `keep`
// entries along axis 1 are kept.
ad::Var take_rows(const ad::Var &a, const std::vector<std::size_t> &rows,
                  std::size_t keep) {
  const ad::Shape &shape = a.shape();
  const std::size_t T = shape.size() > 1 ? shape[1] : 1;
  std::size_t inner = 1;
  for (std::size_t k = 2; k < shape.size(); ++k)
    inner *= shape[k];
  if (shape.size() == 1)
    keep = 1;
  ad::Shape out_shape = shape;
  out_shape[0] = rows.size();
  if (shape.size() > 1)
    out_shape[1] = keep;
  ad::Tensor out(out_shape);
  const auto &v = a.value();
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < keep * inner; ++i)
      out[r * keep * inner + i] = v[rows[r] * T * inner + i];
  auto vjp = [rows, keep, inner, T](const ad::Tensor &g, ad::GradSink &sink) {
    ad::Tensor &ga = sink[0];
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t i = 0; i < keep * inner; ++i)
        ga[rows[r] * T * inner + i] += g[r * keep * inner + i];
  };
  return a.tape().record(ad::OpKind::Custom, {a.id()}, std::move(out),
                         std::move(vjp));
}

// Scatters (B_g, L_g) (or (B_g)) parts into a zero (B, T) (or (B)) array.
ad::Var place_rows(const std::vector<ad::Var> &parts,
                   const std::vector<std::vector<std::size_t>> &rows,
                   const ad::Shape &shape) {
  const std::size_t T = shape.size() > 1 ? shape[1] : 1;
  ad::Tensor out(shape, 0.0);
  std::vector<ad::NodeId> parents;
  std::vector<std::size_t> widths;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto &v = parts[p].value();
    const std::size_t L = v.rank() > 1 ? v.dim(1) : 1;
    widths.push_back(L);
    parents.push_back(parts[p].id());
    for (std::size_t r = 0; r < rows[p].size(); ++r)
      for (std::size_t i = 0; i < L; ++i)
        out[rows[p][r] * T + i] = v[r * L + i];
  }
  auto vjp = [rows, widths, T](const ad::Tensor &g, ad::GradSink &sink) {
    for (std::size_t p = 0; p < rows.size(); ++p) {
      if (!sink.wants(p))
        continue;
      ad::Tensor &gp = sink[p];
      for (std::size_t r = 0; r < rows[p].size(); ++r)
        for (std::size_t i = 0; i < widths[p]; ++i)
          gp[r * widths[p] + i] += g[rows[p][r] * T + i];
    }
  };
  return parts.front().tape().record(ad::OpKind::Custom, std::move(parents),
                                     std::move(out), std::move(vjp));
}

ad::Var evaluate_uniform(const ad::Var &signal, double dt, const Formula &f,
                         const EvalConfig &cfg, const ParamVars &params,
                         bool head_only) {
  TapeOps ops(signal, cfg, params);
  Engine<TapeOps> engine(ops, cfg, dt);
  const auto columns = engine.eval(f);
  return head_only ? columns.front() : ad::stack(columns);
}

// Elements of a ragged batch are grouped by length so that every element is
// evaluated on exactly its own samples, in every approximation mode.
ad::Var evaluate_batch(const ad::Var &signal, const SignalLayout &layout,
                       const Formula &f, const EvalConfig &cfg,
                       const ParamVars &params, bool head_only) {
  if (!signal.valid() || signal.shape().size() != 3)
    throw EvalError("signal variable must have shape (B, T, n)");
  const std::size_t B = signal.shape()[0];
  const std::size_t T = signal.shape()[1];
  if (B == 0 || T == 0)
    throw EvalError("empty signal");
  detail::check_inputs(signal.shape()[2], layout.dt, f, cfg);
  for (const auto &[name, var] : params)
    if (var.value().size() != 1 && var.value().size() != B)
      throw EvalError("parameter '" + name + "' must have 1 or B values");
  if (!layout.lengths.empty() && layout.lengths.size() != B)
    throw EvalError("layout lengths do not match the batch size");

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t L = layout.lengths.empty() ? T : layout.lengths[b];
    if (L == 0 || L > T)
      throw EvalError("element length out of range");
    groups[L].push_back(b);
  }
  if (groups.size() == 1 && groups.begin()->first == T)
    return evaluate_uniform(signal, layout.dt, f, cfg, params, head_only);

  std::vector<ad::Var> parts;
  std::vector<std::vector<std::size_t>> rows;
  for (const auto &[L, members] : groups) {
    ParamVars sub;
    for (const auto &[name, var] : params)
      sub.emplace(name, var.value().size() == 1 ? var
                                                : take_rows(var, members, 1));
    parts.push_back(evaluate_uniform(take_rows(signal, members, L), layout.dt,
                                     f, cfg, sub, head_only));
    rows.push_back(members);
  }
  return place_rows(parts, rows, head_only ? ad::Shape{B} : ad::Shape{B, T});
}

} // namespace

std::size_t worker_count() {
  if (const char *env = std::getenv("STLGRAD_THREADS")) {
    char *end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0)
      return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error)
            error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto &t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

RobustnessTrace robustness_trace(const Signal &signal, const Formula &f,
                                 const EvalConfig &cfg,
                                 const ParamValues &params) {
  detail::check_inputs(signal.dim(), signal.dt(), f, cfg);
  RobustnessTrace tr = empty_trace(signal, f);
  parallel_for(signal.batch(), [&](std::size_t b) {
    const auto row = element_trace(signal, b, f, cfg, params);
    std::copy(row.begin(), row.end(), tr.values.begin() + b * tr.time);
  });
  return tr;
}

std::vector<double> robustness(const Signal &signal, const Formula &f,
                               const EvalConfig &cfg,
                               const ParamValues &params) {
  const auto tr = robustness_trace(signal, f, cfg, params);
  std::vector<double> out(tr.batch);
  for (std::size_t b = 0; b < tr.batch; ++b)
    out[b] = tr.at(b, 0);
  return out;
}

RobustnessTrace until_trace(const Signal &signal, const Formula &lhs,
                            const Formula &rhs, const Interval &iv,
                            const EvalConfig &cfg, const ParamValues &params) {
  return robustness_trace(signal, Formula::until(lhs, rhs, iv), cfg, params);
}

RobustnessTrace integral_trace(const Signal &signal, const Formula &f,
                               const Interval &iv, IntegralWeight weight,
                               const EvalConfig &cfg,
                               const ParamValues &params) {
  return robustness_trace(signal, Formula::integral(f, iv, weight), cfg,
                          params);
}

std::vector<bool> satisfaction_trace(const Signal &signal, const Formula &f,
                                     std::size_t b, const EvalConfig &cfg,
                                     const ParamValues &params) {
  detail::check_inputs(signal.dim(), signal.dt(), f, cfg);
  if (b >= signal.batch())
    throw EvalError("batch element out of range");
  BoolEval eval(signal, b, cfg, params);
  const auto v = eval.eval(f);
  return {v.begin(), v.end()};
}

bool satisfies(const Signal &signal, const Formula &f, std::size_t b,
               const EvalConfig &cfg, const ParamValues &params) {
  return satisfaction_trace(signal, f, b, cfg, params).front();
}

std::vector<CellRecord> temporal_cell_history(const Signal &signal,
                                              const Formula &f,
                                              const EvalConfig &cfg,
                                              std::size_t b,
                                              const ParamValues &params) {
  detail::check_inputs(signal.dim(), signal.dt(), f, cfg);
  if (f.op() != Op::Eventually && f.op() != Op::Always)
    throw InvalidArgument("root of the formula is not a temporal operator");
  if (b >= signal.batch())
    throw EvalError("batch element out of range");
  std::vector<CellRecord> out;
  const void *root = f.id();
  CellObserver observer = [&](const CellRecord &rec) {
    if (rec.node == root)
      out.push_back(rec);
  };
  element_trace(signal, b, f, cfg, params, &observer);
  return out;
}

ad::Var robustness_trace(const ad::Var &signal, const SignalLayout &layout,
                         const Formula &f, const EvalConfig &cfg,
                         const ParamVars &params) {
  return evaluate_batch(signal, layout, f, cfg, params, false);
}

ad::Var robustness(const ad::Var &signal, const SignalLayout &layout,
                   const Formula &f, const EvalConfig &cfg,
                   const ParamVars &params) {
  return evaluate_batch(signal, layout, f, cfg, params, true);
}

RobustnessGradient robustness_gradient(const Signal &signal, const Formula &f,
                                       const EvalConfig &cfg,
                                       const ParamValues &params) {
  ad::Tape tape;
  const auto &v = signal.values();
  ad::Var x = tape.leaf(
      ad::Tensor({signal.batch(), signal.time(), signal.dim()},
                 std::vector<double>(v.begin(), v.end())));
  ParamVars vars;
  for (const auto &[name, init] : params)
    vars.emplace(name, tape.leaf(ad::Tensor({init.size()}, init)));
  ad::Var rho = robustness(x, SignalLayout::of(signal), f, cfg, vars);
  RobustnessGradient out;
  out.robustness.assign(rho.value().data().begin(), rho.value().data().end());
  const auto grads = tape.backward(ad::sum(rho));
  const auto &gx = grads[x];
  out.signal.assign(gx.data().begin(), gx.data().end());
  for (const auto &[name, var] : vars) {
    const auto &g = grads[var];
    out.params.emplace(name, std::vector<double>(g.data().begin(), g.data().end()));
  }
  return out;
}

} // namespace stlgrad
