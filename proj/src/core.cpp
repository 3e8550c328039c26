#include "stlgrad/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace stlgrad {

// ---------------------------------------------------------------------------
// Signal

Signal::Signal(std::size_t batch, std::size_t time, std::size_t dim,
               std::vector<double> values, double t0, double dt,
               std::vector<std::size_t> lengths)
    : batch_(batch), time_(time), dim_(dim), values_(std::move(values)),
      t0_(t0), dt_(dt), lengths_(std::move(lengths)) {
  if (batch_ == 0 || time_ == 0 || dim_ == 0)
    throw InvalidArgument("signal needs batch, time and dim >= 1");
  if (values_.size() != batch_ * time_ * dim_)
    throw InvalidArgument("signal value count " +
                          std::to_string(values_.size()) +
                          " does not match shape");
  if (!(dt_ > 0.0) || !std::isfinite(dt_))
    throw InvalidArgument("signal dt must be positive and finite");
  if (!std::isfinite(t0_))
    throw InvalidArgument("signal t0 must be finite");
  if (lengths_.empty())
    lengths_.assign(batch_, time_);
  if (lengths_.size() != batch_)
    throw InvalidArgument("signal needs one length per batch element");
  for (std::size_t len : lengths_)
    if (len < 1 || len > time_)
      throw InvalidArgument("signal lengths must lie in [1, T]");
}

Signal Signal::scalar(std::vector<double> samples, double dt, double t0) {
  const std::size_t n = samples.size();
  return Signal(1, n, 1, std::move(samples), t0, dt);
}

Signal Signal::from_states(const std::vector<std::vector<double>> &states,
                           double dt, double t0) {
  if (states.empty())
    throw InvalidArgument("signal needs at least one state");
  const std::size_t dim = states.front().size();
  std::vector<double> flat;
  flat.reserve(states.size() * dim);
  for (const auto &x : states) {
    if (x.size() != dim)
      throw InvalidArgument("all states must have the same dimension");
    flat.insert(flat.end(), x.begin(), x.end());
  }
  return Signal(1, states.size(), dim, std::move(flat), t0, dt);
}

Signal Signal::batch_of(const std::vector<Signal> &elements) {
  if (elements.empty())
    throw InvalidArgument("empty batch");
  const Signal &first = elements.front();
  std::size_t time = 0;
  std::size_t count = 0;
  for (const Signal &s : elements) {
    if (s.dim() != first.dim())
      throw InvalidArgument("batched signals must share the state dimension");
    if (std::abs(s.dt() - first.dt()) > 1e-12 * first.dt() ||
        std::abs(s.t0() - first.t0()) > 1e-12 * std::max(1.0, first.dt()))
      throw InvalidArgument("batched signals must share t0 and dt");
    time = std::max(time, s.time());
    count += s.batch();
  }
  const std::size_t dim = first.dim();
  std::vector<double> values(count * time * dim);
  std::vector<std::size_t> lengths;
  lengths.reserve(count);
  std::size_t row = 0;
  for (const Signal &s : elements) {
    for (std::size_t b = 0; b < s.batch(); ++b, ++row) {
      const std::size_t len = s.length(b);
      for (std::size_t i = 0; i < time; ++i) {
        const auto src = s.state(b, std::min(i, len - 1));
        std::copy(src.begin(), src.end(),
                  values.begin() + static_cast<std::ptrdiff_t>((row * time + i) * dim));
      }
      lengths.push_back(len);
    }
  }
  return Signal(count, time, dim, std::move(values), first.t0(), first.dt(),
                std::move(lengths));
}

bool Signal::uniform_length() const {
  return std::all_of(lengths_.begin(), lengths_.end(),
                     [this](std::size_t l) { return l == time_; });
}

Signal Signal::subsignal(std::size_t i) const {
  for (std::size_t len : lengths_)
    if (i >= len)
      throw InvalidArgument("subsignal index " + std::to_string(i) +
                            " out of range");
  const std::size_t time = time_ - i;
  std::vector<double> values(batch_ * time * dim_);
  for (std::size_t b = 0; b < batch_; ++b)
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>((b * time_ + i) * dim_),
                time * dim_,
                values.begin() + static_cast<std::ptrdiff_t>(b * time * dim_));
  std::vector<std::size_t> lengths(lengths_);
  for (auto &len : lengths)
    len -= i;
  return Signal(batch_, time, dim_, std::move(values), time_of(i), dt_,
                std::move(lengths));
}

Signal Signal::element(std::size_t b) const {
  if (b >= batch_)
    throw InvalidArgument("batch index out of range");
  const std::size_t len = lengths_[b];
  std::vector<double> values(
      values_.begin() + static_cast<std::ptrdiff_t>(b * time_ * dim_),
      values_.begin() + static_cast<std::ptrdiff_t>((b * time_ + len) * dim_));
  return Signal(1, len, dim_, std::move(values), t0_, dt_);
}

// ---------------------------------------------------------------------------
// Interval

Interval::Interval(double a, double b) : a_(a), b_(b) {
  if (std::isnan(a) || std::isnan(b) || a < 0.0 || !std::isfinite(a))
    throw InvalidArgument("interval lower bound must be finite and >= 0");
  if (a > b)
    throw InvalidArgument("interval lower bound exceeds upper bound");
}

namespace {

std::size_t steps_of(double bound, double dt, const char *which) {
  const double ratio = bound / dt;
  const double k = std::round(ratio);
  if (std::abs(bound - k * dt) > 1e-9 * dt)
    throw InvalidArgument(std::string("interval bound ") + which + "=" +
                          std::to_string(bound) +
                          " is not a multiple of dt=" + std::to_string(dt));
  return static_cast<std::size_t>(k);
}

} // namespace

IntervalCounts interval_to_counts(const Interval &iv, double dt) {
  if (!(dt > 0.0))
    throw InvalidArgument("dt must be positive");
  IntervalCounts c;
  c.n_a = steps_of(iv.lower(), dt, "a") + 1;
  if (iv.bounded()) {
    c.n_b = steps_of(iv.upper(), dt, "b") + 1;
    c.m = *c.n_b - c.n_a + 1;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Predicates

namespace {

template <class... Fs> struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs> Overloaded(Fs...) -> Overloaded<Fs...>;

} // namespace

double evaluate_mu(const Mu &m, std::span<const double> x) {
  return std::visit(
      Overloaded{
          [&](const mu::Coordinate &c) { return x[c.index]; },
          [&](const mu::Affine &a) {
            double acc = a.offset;
            for (std::size_t j = 0; j < a.indices.size(); ++j)
              acc += a.coeffs[j] * x[a.indices[j]];
            return acc;
          },
          [&](const mu::Norm &n) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n.indices.size(); ++j) {
              const double d = x[n.indices[j]] - n.center[j];
              acc += d * d;
            }
            return std::sqrt(acc);
          },
          [&](const mu::AbsDeviation &d) {
            return std::abs(x[d.index] - d.reference);
          },
          [&](const mu::BoxMargin &bx) {
            double best = kInfinity;
            for (std::size_t j = 0; j < bx.indices.size(); ++j) {
              const double v = x[bx.indices[j]];
              best = std::min(best, v - bx.lo[j]);
              best = std::min(best, bx.hi[j] - v);
            }
            return best;
          },
      },
      m);
}

void mu_gradient(const Mu &m, std::span<const double> x,
                 std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::visit(
      Overloaded{
          [&](const mu::Coordinate &c) { grad[c.index] = 1.0; },
          [&](const mu::Affine &a) {
            for (std::size_t j = 0; j < a.indices.size(); ++j)
              grad[a.indices[j]] += a.coeffs[j];
          },
          [&](const mu::Norm &n) {
            const double r = evaluate_mu(m, x);
            if (r == 0.0)
              return;
            for (std::size_t j = 0; j < n.indices.size(); ++j)
              grad[n.indices[j]] += (x[n.indices[j]] - n.center[j]) / r;
          },
          [&](const mu::AbsDeviation &d) {
            grad[d.index] = x[d.index] - d.reference < 0.0 ? -1.0 : 1.0;
          },
          [&](const mu::BoxMargin &bx) {
            double best = kInfinity;
            std::size_t arg = 0;
            double sign = 0.0;
            for (std::size_t j = 0; j < bx.indices.size(); ++j) {
              const double v = x[bx.indices[j]];
              if (v - bx.lo[j] < best) {
                best = v - bx.lo[j];
                arg = bx.indices[j];
                sign = 1.0;
              }
              if (bx.hi[j] - v < best) {
                best = bx.hi[j] - v;
                arg = bx.indices[j];
                sign = -1.0;
              }
            }
            if (sign != 0.0)
              grad[arg] = sign;
          },
      },
      m);
}

std::size_t mu_branch(const Mu &m, std::span<const double> x) {
  return std::visit(
      Overloaded{
          [](const mu::Coordinate &) -> std::size_t { return 0; },
          [](const mu::Affine &) -> std::size_t { return 0; },
          [&](const mu::Norm &) -> std::size_t {
            return evaluate_mu(m, x) == 0.0 ? 1 : 0;
          },
          [&](const mu::AbsDeviation &d) -> std::size_t {
            return x[d.index] - d.reference < 0.0 ? 1 : 0;
          },
          [&](const mu::BoxMargin &bx) -> std::size_t {
            double best = kInfinity;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < bx.indices.size(); ++j) {
              const double v = x[bx.indices[j]];
              if (v - bx.lo[j] < best) {
                best = v - bx.lo[j];
                arg = 2 * j;
              }
              if (bx.hi[j] - v < best) {
                best = bx.hi[j] - v;
                arg = 2 * j + 1;
              }
            }
            return arg;
          },
      },
      m);
}

std::size_t mu_required_dim(const Mu &m) {
  auto top = [](const std::vector<std::size_t> &idx) {
    std::size_t r = 0;
    for (auto i : idx)
      r = std::max(r, i + 1);
    return r;
  };
  return std::visit(
      Overloaded{
          [](const mu::Coordinate &c) { return c.index + 1; },
          [&](const mu::Affine &a) { return top(a.indices); },
          [&](const mu::Norm &n) { return top(n.indices); },
          [](const mu::AbsDeviation &d) { return d.index + 1; },
          [&](const mu::BoxMargin &b) { return top(b.indices); },
      },
      m);
}

double Predicate::robustness(std::span<const double> state, double c) const {
  const double v = evaluate_mu(mu, state);
  return is_lower_bound(comparison) ? v - c : c - v;
}

bool Predicate::holds(std::span<const double> state, double c) const {
  const double v = evaluate_mu(mu, state);
  switch (comparison) {
  case Comparison::Greater:
    return v > c;
  case Comparison::GreaterEq:
    return v >= c;
  case Comparison::Less:
    return v < c;
  case Comparison::LessEq:
    return v <= c;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Formula

std::string_view op_name(Op op) {
  switch (op) {
  case Op::True:
    return "true";
  case Op::Pred:
    return "predicate";
  case Op::Not:
    return "not";
  case Op::And:
    return "and";
  case Op::Or:
    return "or";
  case Op::Implies:
    return "implies";
  case Op::Eventually:
    return "eventually";
  case Op::Always:
    return "always";
  case Op::Integral:
    return "integral";
  case Op::Until:
    return "until";
  }
  return "?";
}

std::size_t op_arity(Op op) {
  switch (op) {
  case Op::True:
  case Op::Pred:
    return 0;
  case Op::Not:
  case Op::Eventually:
  case Op::Always:
  case Op::Integral:
    return 1;
  case Op::And:
  case Op::Or:
  case Op::Implies:
  case Op::Until:
    return 2;
  }
  return 0;
}

bool op_has_interval(Op op) {
  return op == Op::Eventually || op == Op::Always || op == Op::Integral ||
         op == Op::Until;
}

struct Formula::Node {
  Op op;
  std::vector<Formula> children;
  Interval interval;
  std::optional<Predicate> pred;
  IntegralWeight weight;
  SourceSpan span;
};

namespace {

std::shared_ptr<Formula::Node> make_node(Op op) {
  auto n = std::make_shared<Formula::Node>();
  n->op = op;
  return n;
}

} // namespace

Formula Formula::truth() { return Formula(make_node(Op::True)); }

Formula Formula::predicate(Predicate p) {
  if (const auto *b = std::get_if<mu::BoxMargin>(&p.mu)) {
    if (b->indices.empty() || b->lo.size() != b->indices.size() ||
        b->hi.size() != b->indices.size())
      throw InvalidArgument("box predicate needs one [lo,hi] per axis");
    for (std::size_t j = 0; j < b->lo.size(); ++j)
      if (!(b->lo[j] <= b->hi[j]))
        throw InvalidArgument("box predicate needs lo <= hi");
  }
  if (const auto *a = std::get_if<mu::Affine>(&p.mu))
    if (a->coeffs.size() != a->indices.size())
      throw InvalidArgument("affine predicate needs one coefficient per term");
  if (const auto *n = std::get_if<mu::Norm>(&p.mu))
    if (n->indices.empty() || n->center.size() != n->indices.size())
      throw InvalidArgument("norm predicate needs one center per axis");
  auto n = make_node(Op::Pred);
  n->pred = std::move(p);
  return Formula(std::move(n));
}

namespace {

std::shared_ptr<Formula::Node> unary(Op op, Formula f, Interval iv) {
  auto n = make_node(op);
  n->children.push_back(std::move(f));
  n->interval = iv;
  return n;
}

std::shared_ptr<Formula::Node> binary(Op op, Formula l, Formula r,
                                      Interval iv = {}) {
  auto n = make_node(op);
  n->children.push_back(std::move(l));
  n->children.push_back(std::move(r));
  n->interval = iv;
  return n;
}

} // namespace

Formula Formula::negation(Formula f) {
  return Formula(unary(Op::Not, std::move(f), {}));
}
Formula Formula::conjunction(Formula l, Formula r) {
  return Formula(binary(Op::And, std::move(l), std::move(r)));
}
Formula Formula::disjunction(Formula l, Formula r) {
  return Formula(binary(Op::Or, std::move(l), std::move(r)));
}
Formula Formula::implication(Formula l, Formula r) {
  return Formula(binary(Op::Implies, std::move(l), std::move(r)));
}
Formula Formula::eventually(Formula f, Interval iv) {
  return Formula(unary(Op::Eventually, std::move(f), iv));
}
Formula Formula::always(Formula f, Interval iv) {
  return Formula(unary(Op::Always, std::move(f), iv));
}
Formula Formula::integral(Formula f, Interval iv, IntegralWeight weight) {
  if (!iv.bounded())
    throw InvalidArgument("integral operator requires a finite interval");
  if (!std::isfinite(weight.scale))
    throw InvalidArgument("integral weight must be finite");
  auto n = unary(Op::Integral, std::move(f), iv);
  n->weight = weight;
  return Formula(std::move(n));
}
Formula Formula::until(Formula l, Formula r, Interval iv) {
  return Formula(binary(Op::Until, std::move(l), std::move(r), iv));
}

Op Formula::op() const { return node_->op; }

const Formula &Formula::child(std::size_t i) const {
  if (i >= node_->children.size())
    throw InvalidArgument("formula child index out of range");
  return node_->children[i];
}

const Interval &Formula::interval() const {
  if (!op_has_interval(op()))
    throw InvalidArgument(std::string(op_name(op())) + " has no interval");
  return node_->interval;
}

const Predicate &Formula::predicate() const {
  if (!node_->pred)
    throw InvalidArgument("formula is not a predicate");
  return *node_->pred;
}

const IntegralWeight &Formula::weight() const {
  if (op() != Op::Integral)
    throw InvalidArgument("formula is not an integral");
  return node_->weight;
}

SourceSpan Formula::span() const { return node_->span; }

Formula Formula::with_span(SourceSpan span) const {
  auto n = std::make_shared<Node>(*node_);
  n->span = span;
  return Formula(std::move(n));
}

std::vector<std::string> Formula::parameters() const {
  std::set<std::string> names;
  auto walk = [&](auto &&self, const Formula &f) -> void {
    if (f.op() == Op::Pred && f.predicate().threshold.parameter)
      names.insert(*f.predicate().threshold.parameter);
    for (std::size_t i = 0; i < f.arity(); ++i)
      self(self, f.child(i));
  };
  walk(walk, *this);
  return {names.begin(), names.end()};
}

std::size_t Formula::required_dim() const {
  std::size_t dim = 0;
  if (op() == Op::Pred)
    dim = mu_required_dim(predicate().mu);
  for (std::size_t i = 0; i < arity(); ++i)
    dim = std::max(dim, child(i).required_dim());
  return dim;
}

std::size_t Formula::size() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < arity(); ++i)
    n += child(i).size();
  return n;
}

std::size_t Formula::depth() const {
  std::size_t d = 0;
  for (std::size_t i = 0; i < arity(); ++i)
    d = std::max(d, child(i).depth());
  return d + 1;
}

bool operator==(const Formula &a, const Formula &b) {
  if (a.node_ == b.node_)
    return true;
  const auto &x = *a.node_;
  const auto &y = *b.node_;
  if (x.op != y.op || x.children.size() != y.children.size())
    return false;
  if (op_has_interval(x.op) && !(x.interval == y.interval))
    return false;
  if (x.op == Op::Integral && !(x.weight == y.weight))
    return false;
  if (x.op == Op::Pred && !(*x.pred == *y.pred))
    return false;
  for (std::size_t i = 0; i < x.children.size(); ++i)
    if (!(x.children[i] == y.children[i]))
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// EvalConfig

void EvalConfig::validate() const {
  if (!(w >= 0.0) || !std::isfinite(w))
    throw InvalidArgument("scaling parameter w must be finite and >= 0");
  if (!(rho_max > 0.0) || !std::isfinite(rho_max))
    throw InvalidArgument("rho_max must be positive and finite");
  if (mode == Approximation::LogSumExp && w == 0.0)
    throw InvalidArgument("logsumexp approximation needs w > 0");
  if (padding.kind == Padding::Kind::Constant && !std::isfinite(padding.value))
    throw InvalidArgument("constant padding value must be finite");
}

} // namespace stlgrad
