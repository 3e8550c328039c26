#include "stlgrad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace stlgrad::ad {

// ---------------------------------------------------------------------------
// Tensor

namespace {

std::size_t element_count(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape &s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i)
      out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

} // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_))
    throw Error("tensor data size " + std::to_string(data_.size()) +
                " does not match shape " + shape_string(shape_));
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw Error("item() on a tensor of shape " + shape_string(shape_));
  return data_[0];
}

std::string_view op_kind_name(OpKind kind) {
  switch (kind) {
  case OpKind::Leaf:
    return "leaf";
  case OpKind::Constant:
    return "constant";
  case OpKind::Add:
    return "add";
  case OpKind::Sub:
    return "sub";
  case OpKind::Mul:
    return "mul";
  case OpKind::Div:
    return "div";
  case OpKind::Neg:
    return "neg";
  case OpKind::Scale:
    return "scale";
  case OpKind::Exp:
    return "exp";
  case OpKind::Log:
    return "log";
  case OpKind::Relu:
    return "relu";
  case OpKind::Sqrt:
    return "sqrt";
  case OpKind::Abs:
    return "abs";
  case OpKind::MaxReduce:
    return "max-reduce";
  case OpKind::MinReduce:
    return "min-reduce";
  case OpKind::SoftMax:
    return "soft-max";
  case OpKind::SoftMin:
    return "soft-min";
  case OpKind::Sum:
    return "sum";
  case OpKind::Dot:
    return "dot";
  case OpKind::Shift:
    return "shift";
  case OpKind::Select:
    return "select";
  case OpKind::Stack:
    return "stack";
  case OpKind::Repeat:
    return "repeat";
  case OpKind::Where:
    return "where";
  case OpKind::Gather:
    return "gather";
  case OpKind::WindowReduce:
    return "window-reduce";
  case OpKind::WeightedSum:
    return "weighted-sum";
  case OpKind::Clamp:
    return "clamp";
  case OpKind::Custom:
    return "custom";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Var / GradSink / Gradients

const Tensor &Var::value() const {
  if (!tape_)
    throw Error("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor &GradSink::operator[](std::size_t i) {
  const NodeId parent = tape_.nodes_[node_].parents.at(i);
  Tensor &g = tape_.grads_[parent];
  if (g.size() == 0 && tape_.nodes_[parent].value.size() != 0)
    g = Tensor(tape_.nodes_[parent].value.shape(), 0.0);
  return g;
}

bool GradSink::wants(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].parents.at(i)].requires_grad;
}

const Tensor &Gradients::operator[](const Var &leaf) const {
  if (auto it = grads_.find(leaf.id()); it != grads_.end())
    return it->second;
  auto [it, _] = zeros_.try_emplace(leaf.id(), leaf.shape(), 0.0);
  return it->second;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (consumed_)
    throw Error("tape already consumed by backward()");
  nodes_.push_back({OpKind::Leaf, std::move(value), {}, {}, requires_grad, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (consumed_)
    throw Error("tape already consumed by backward()");
  nodes_.push_back({OpKind::Constant, std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<NodeId> parents, Tensor value,
                 Vjp vjp) {
  if (consumed_)
    throw Error("tape already consumed by backward()");
  bool needs = false;
  for (NodeId p : parents) {
    if (p >= nodes_.size())
      throw Error("parent node id out of range");
    needs = needs || nodes_[p].requires_grad;
  }
  Node n{kind, std::move(value), std::move(parents), {}, needs, false};
  if (needs)
    n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::span<const Var> in) {
  auto need = [&](std::size_t n) {
    if (in.size() != n)
      throw Error(std::string(op_kind_name(kind)) + " expects " +
                  std::to_string(n) + " inputs");
  };
  switch (kind) {
  case OpKind::Add:
    need(2);
    return add(in[0], in[1]);
  case OpKind::Sub:
    need(2);
    return sub(in[0], in[1]);
  case OpKind::Mul:
    need(2);
    return mul(in[0], in[1]);
  case OpKind::Div:
    need(2);
    return div(in[0], in[1]);
  case OpKind::Neg:
    need(1);
    return neg(in[0]);
  case OpKind::Exp:
    need(1);
    return exp(in[0]);
  case OpKind::Log:
    need(1);
    return log(in[0]);
  case OpKind::Relu:
    need(1);
    return relu(in[0]);
  case OpKind::Sqrt:
    need(1);
    return sqrt(in[0]);
  case OpKind::Abs:
    need(1);
    return abs(in[0]);
  case OpKind::Sum:
    need(1);
    return sum(in[0]);
  case OpKind::Dot:
    need(2);
    return dot(in[0], in[1]);
  case OpKind::MaxReduce:
    return in.size() == 1 ? reduce_all({Extremum::Max}, in[0])
                          : max_reduce(in);
  case OpKind::MinReduce:
    return in.size() == 1 ? reduce_all({Extremum::Min}, in[0])
                          : min_reduce(in);
  default:
    throw Error(std::string(op_kind_name(kind)) +
                " needs parameters; use its dedicated function");
  }
}

Gradients Tape::backward(const Var &loss) {
  if (consumed_)
    throw Error("tape already consumed by backward()");
  if (&loss.tape() != this)
    throw Error("loss belongs to another tape");
  if (loss.value().size() != 1)
    throw Error("backward() needs a scalar loss");
  consumed_ = true;
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id()] = Tensor(loss.shape(), 1.0);
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node &n = nodes_[id];
    if (!n.requires_grad || !n.vjp || grads_[id].size() == 0)
      continue;
    GradSink sink(*this, id);
    n.vjp(grads_[id], sink);
    grads_[id] = Tensor();
  }
  Gradients out;
  out.tape_ = this;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].leaf && nodes_[id].requires_grad) {
      if (grads_[id].size() != 0)
        out.grads_.emplace(id, std::move(grads_[id]));
      else
        out.grads_.emplace(id, Tensor(nodes_[id].value.shape(), 0.0));
    }
  }
  grads_.clear();
  grads_.shrink_to_fit();
  return out;
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape &same_tape(const Var &a, const Var &b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape())
    throw Error("operands live on different tapes");
  return a.tape();
}

// Broadcast rule: equal shapes, or one side holds a single element.
Shape broadcast_shape(const Tensor &a, const Tensor &b, OpKind kind) {
  if (a.shape() == b.shape())
    return a.shape();
  if (b.size() == 1)
    return a.shape();
  if (a.size() == 1)
    return b.shape();
  throw Error(std::string(op_kind_name(kind)) + ": shape mismatch " +
              shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

inline double bcast(const Tensor &t, std::size_t i) {
  return t.size() == 1 ? t[0] : t[i];
}

inline void accum(Tensor &g, std::size_t i, double v) {
  if (g.size() == 1)
    g[0] += v;
  else
    g[i] += v;
}

template <class Forward, class Backward>
Var binary(OpKind kind, const Var &a, const Var &b, Forward fwd,
           Backward bwd) {
  Tape &tape = same_tape(a, b);
  const Tensor &x = a.value();
  const Tensor &y = b.value();
  Tensor out(broadcast_shape(x, y, kind));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = fwd(bcast(x, i), bcast(y, i));
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(
      kind, {ia, ib}, std::move(out),
      [&tape, ia, ib, bwd](const Tensor &g, GradSink &sink) {
        const Tensor &x = tape.value(ia);
        const Tensor &y = tape.value(ib);
        const bool wa = sink.wants(0), wb = sink.wants(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const auto [da, db] = bwd(bcast(x, i), bcast(y, i));
          if (wa)
            accum(sink[0], i, g[i] * da);
          if (wb)
            accum(sink[1], i, g[i] * db);
        }
      });
}

template <class Forward, class Backward>
Var unary(OpKind kind, const Var &a, Forward fwd, Backward bwd) {
  Tape &tape = a.tape();
  const Tensor &x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = fwd(x[i]);
  const NodeId ia = a.id();
  return tape.record(kind, {ia}, std::move(out),
                     [&tape, ia, bwd](const Tensor &g, GradSink &sink) {
                       const Tensor &x = tape.value(ia);
                       Tensor &gx = sink[0];
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gx[i] += g[i] * bwd(x[i]);
                     });
}

void check_same_shapes(std::span<const Var> ops, OpKind kind) {
  if (ops.empty())
    throw Error(std::string(op_kind_name(kind)) + " of zero operands");
  Tape &tape = ops[0].tape();
  for (const Var &v : ops) {
    if (&v.tape() != &tape)
      throw Error("operands live on different tapes");
    if (v.shape() != ops[0].shape())
      throw Error(std::string(op_kind_name(kind)) + ": shape mismatch " +
                  shape_string(v.shape()) + " vs " +
                  shape_string(ops[0].shape()));
  }
}

OpKind reduction_kind(const Reduction &r) {
  if (r.smoothing == Smoothing::None)
    return r.which == Extremum::Max ? OpKind::MaxReduce : OpKind::MinReduce;
  return r.which == Extremum::Max ? OpKind::SoftMax : OpKind::SoftMin;
}

// Records which operand an exact reduction picked.
void check_kink(Tape &tape, const Reduction &r, std::span<const double>,
                std::size_t arg) {
  if (r.smoothing == Smoothing::None)
    tape.note_branch(arg);
}

} // namespace

Var add(const Var &a, const Var &b) {
  return binary(
      OpKind::Add, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(const Var &a, const Var &b) {
  return binary(
      OpKind::Sub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(const Var &a, const Var &b) {
  return binary(
      OpKind::Mul, a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Var div(const Var &a, const Var &b) {
  for (double v : b.value().data())
    if (v == 0.0)
      throw Error("division by zero");
  return binary(
      OpKind::Div, a, b, [](double x, double y) { return x / y; },
      [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Var neg(const Var &a) {
  return unary(
      OpKind::Neg, a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Var scale(const Var &a, double k) {
  return unary(
      OpKind::Scale, a, [k](double x) { return k * x; },
      [k](double) { return k; });
}

Var exp(const Var &a) {
  return unary(
      OpKind::Exp, a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Var log(const Var &a) {
  for (double v : a.value().data())
    if (!(v > 0.0))
      throw Error("log of a non-positive value");
  return unary(
      OpKind::Log, a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Var relu(const Var &a) {
  Tape &tape = a.tape();
  for (double v : a.value().data())
    tape.note_branch(v > 0.0);
  return unary(
      OpKind::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sqrt(const Var &a) {
  for (double v : a.value().data())
    if (v < 0.0)
      throw Error("sqrt of a negative value");
  return unary(
      OpKind::Sqrt, a, [](double x) { return std::sqrt(x); },
      [](double x) { return x > 0.0 ? 0.5 / std::sqrt(x) : 0.0; });
}

Var abs(const Var &a) {
  Tape &tape = a.tape();
  for (double v : a.value().data())
    tape.note_branch(v < 0.0);
  return unary(
      OpKind::Abs, a, [](double x) { return std::abs(x); },
      [](double x) { return x < 0.0 ? -1.0 : 1.0; });
}

Var sum(const Var &a) {
  Tape &tape = a.tape();
  double acc = 0.0;
  for (double v : a.value().data())
    acc += v;
  return tape.record(OpKind::Sum, {a.id()}, Tensor::scalar(acc),
                     [](const Tensor &g, GradSink &sink) {
                       Tensor &gx = sink[0];
                       for (std::size_t i = 0; i < gx.size(); ++i)
                         gx[i] += g[0];
                     });
}

Var dot(const Var &a, const Var &b) {
  Tape &tape = same_tape(a, b);
  if (a.shape() != b.shape())
    throw Error("dot: shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  const Tensor &x = a.value();
  const Tensor &y = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += x[i] * y[i];
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::Dot, {ia, ib}, Tensor::scalar(acc),
                     [&tape, ia, ib](const Tensor &g, GradSink &sink) {
                       const Tensor &x = tape.value(ia);
                       const Tensor &y = tape.value(ib);
                       if (sink.wants(0)) {
                         Tensor &gx = sink[0];
                         for (std::size_t i = 0; i < x.size(); ++i)
                           gx[i] += g[0] * y[i];
                       }
                       if (sink.wants(1)) {
                         Tensor &gy = sink[1];
                         for (std::size_t i = 0; i < y.size(); ++i)
                           gy[i] += g[0] * x[i];
                       }
                     });
}

Var reduce(const Reduction &r, std::span<const Var> ops) {
  const OpKind kind = reduction_kind(r);
  check_same_shapes(ops, kind);
  Tape &tape = ops[0].tape();
  const std::size_t k = ops.size();
  const std::size_t n = ops[0].value().size();
  Tensor out(ops[0].shape());
  std::vector<double> column(k);
  std::vector<NodeId> parents;
  parents.reserve(k);
  for (const Var &v : ops)
    parents.push_back(v.id());

  if (r.smoothing == Smoothing::None) {
    std::vector<std::uint32_t> arg(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j)
        column[j] = ops[j].value()[i];
      std::size_t best = 0;
      out[i] = stlgrad::reduce(r, column, {}, &best);
      arg[i] = static_cast<std::uint32_t>(best);
      check_kink(tape, r, column, best);
    }
    return tape.record(kind, std::move(parents), std::move(out),
                       [arg = std::move(arg)](const Tensor &g, GradSink &sink) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           if (sink.wants(arg[i]))
                             sink[arg[i]][i] += g[i];
                       });
  }

  std::vector<double> partials(k * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j)
      column[j] = ops[j].value()[i];
    out[i] = stlgrad::reduce(r, column,
                             std::span<double>(partials.data() + i * k, k));
  }
  return tape.record(
      kind, std::move(parents), std::move(out),
      [partials = std::move(partials), k](const Tensor &g, GradSink &sink) {
        for (std::size_t j = 0; j < k; ++j) {
          if (!sink.wants(j))
            continue;
          Tensor &gj = sink[j];
          for (std::size_t i = 0; i < g.size(); ++i)
            gj[i] += g[i] * partials[i * k + j];
        }
      });
}

Var max_reduce(std::span<const Var> ops) {
  return reduce({Extremum::Max}, ops);
}
Var min_reduce(std::span<const Var> ops) {
  return reduce({Extremum::Min}, ops);
}
Var soft_max(std::span<const Var> ops, double w) {
  return reduce({Extremum::Max, Smoothing::SoftMax, w}, ops);
}
Var soft_min(std::span<const Var> ops, double w) {
  return reduce({Extremum::Min, Smoothing::SoftMax, w}, ops);
}

Var reduce_all(const Reduction &r, const Var &a) {
  Tape &tape = a.tape();
  const Tensor &x = a.value();
  std::vector<double> partials(x.size());
  std::size_t best = 0;
  const double v = stlgrad::reduce(r, x.data(), partials, &best);
  check_kink(tape, r, x.data(), best);
  return tape.record(reduction_kind(r), {a.id()}, Tensor::scalar(v),
                     [partials = std::move(partials)](const Tensor &g,
                                                      GradSink &sink) {
                       Tensor &gx = sink[0];
                       for (std::size_t i = 0; i < partials.size(); ++i)
                         gx[i] += g[0] * partials[i];
                     });
}

Var shift(const Var &window, const Var &u) {
  Tape &tape = same_tape(window, u);
  const Tensor &h = window.value();
  if (h.rank() != 2 || u.value().rank() != 1 || u.value().dim(0) != h.dim(0))
    throw Error("shift expects a (B,K) window and a (B) input, got " +
                shape_string(h.shape()) + " and " + shape_string(u.shape()));
  const std::size_t B = h.dim(0), K = h.dim(1);
  Tensor out(h.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j + 1 < K; ++j)
      out[b * K + j] = h[b * K + j + 1];
    if (K > 0)
      out[b * K + K - 1] = u.value()[b];
  }
  return tape.record(OpKind::Shift, {window.id(), u.id()}, std::move(out),
                     [B, K](const Tensor &g, GradSink &sink) {
                       if (sink.wants(0)) {
                         Tensor &gh = sink[0];
                         for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t j = 0; j + 1 < K; ++j)
                             gh[b * K + j + 1] += g[b * K + j];
                       }
                       if (sink.wants(1) && K > 0) {
                         Tensor &gu = sink[1];
                         for (std::size_t b = 0; b < B; ++b)
                           gu[b] += g[b * K + K - 1];
                       }
                     });
}

Var window_reduce(const Reduction &r, const Var &window, std::size_t count,
                  const std::optional<Var> &lead) {
  Tape &tape = window.tape();
  const Tensor &h = window.value();
  if (h.rank() != 2 || count > h.dim(1))
    throw Error("window_reduce: bad window shape " + shape_string(h.shape()));
  const std::size_t B = h.dim(0), K = h.dim(1);
  const std::size_t extra = lead ? 1 : 0;
  const std::size_t k = count + extra;
  if (k == 0)
    throw Error("window_reduce over an empty window");
  if (lead) {
    if (&lead->tape() != &tape || lead->value().rank() != 1 ||
        lead->value().dim(0) != B)
      throw Error("window_reduce: lead must be a (B) array on the same tape");
  }
  Tensor out({B});
  std::vector<double> column(k);
  std::vector<double> partials(B * k);
  for (std::size_t b = 0; b < B; ++b) {
    if (lead)
      column[0] = lead->value()[b];
    for (std::size_t j = 0; j < count; ++j)
      column[extra + j] = h[b * K + (count - 1 - j)];
    std::size_t best = 0;
    out[b] = stlgrad::reduce(
        r, column, std::span<double>(partials.data() + b * k, k), &best);
    check_kink(tape, r, column, best);
  }
  std::vector<NodeId> parents{window.id()};
  if (lead)
    parents.push_back(lead->id());
  return tape.record(
      reduction_kind(r) == OpKind::MaxReduce ||
              reduction_kind(r) == OpKind::MinReduce
          ? OpKind::WindowReduce
          : reduction_kind(r),
      std::move(parents), std::move(out),
      [partials = std::move(partials), B, K, k, count,
       extra](const Tensor &g, GradSink &sink) {
        if (sink.wants(0)) {
          Tensor &gh = sink[0];
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < count; ++j)
              gh[b * K + (count - 1 - j)] += g[b] * partials[b * k + extra + j];
        }
        if (extra && sink.wants(1)) {
          Tensor &gl = sink[1];
          for (std::size_t b = 0; b < B; ++b)
            gl[b] += g[b] * partials[b * k];
        }
      });
}

Var select(const Var &a, std::size_t axis, std::size_t index) {
  Tape &tape = a.tape();
  const Tensor &x = a.value();
  if (axis >= x.rank() || index >= x.dim(axis))
    throw Error("select: index out of range for shape " +
                shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i)
    outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i)
    inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  Shape shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis)
      shape.push_back(x.dim(i));
  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < inner; ++j)
      out[o * inner + j] = x[(o * n + index) * inner + j];
  return tape.record(OpKind::Select, {a.id()}, std::move(out),
                     [outer, inner, n, index](const Tensor &g, GradSink &sink) {
                       Tensor &gx = sink[0];
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t j = 0; j < inner; ++j)
                           gx[(o * n + index) * inner + j] += g[o * inner + j];
                     });
}

Var stack(std::span<const Var> cols) {
  check_same_shapes(cols, OpKind::Stack);
  Tape &tape = cols[0].tape();
  const std::size_t k = cols.size();
  const std::size_t n = cols[0].value().size();
  Shape shape = cols[0].shape();
  shape.push_back(k);
  Tensor out(shape);
  std::vector<NodeId> parents;
  parents.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    parents.push_back(cols[j].id());
    const Tensor &c = cols[j].value();
    for (std::size_t i = 0; i < n; ++i)
      out[i * k + j] = c[i];
  }
  return tape.record(OpKind::Stack, std::move(parents), std::move(out),
                     [k, n](const Tensor &g, GradSink &sink) {
                       for (std::size_t j = 0; j < k; ++j) {
                         if (!sink.wants(j))
                           continue;
                         Tensor &gj = sink[j];
                         for (std::size_t i = 0; i < n; ++i)
                           gj[i] += g[i * k + j];
                       }
                     });
}

Var repeat(const Var &a, std::size_t k) {
  Tape &tape = a.tape();
  const Tensor &x = a.value();
  if (x.rank() != 1)
    throw Error("repeat expects a (B) array");
  const std::size_t n = x.size();
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out[i * k + j] = x[i];
  return tape.record(OpKind::Repeat, {a.id()}, std::move(out),
                     [n, k](const Tensor &g, GradSink &sink) {
                       Tensor &gx = sink[0];
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < k; ++j)
                           gx[i] += g[i * k + j];
                     });
}

Var where(const std::vector<std::uint8_t> &mask, const Var &a,
          const Var &fallback) {
  Tape &tape = same_tape(a, fallback);
  if (a.shape() != fallback.shape() || mask.size() != a.value().size())
    throw Error("where: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < mask.size(); ++i)
    out[i] = mask[i] ? a.value()[i] : fallback.value()[i];
  return tape.record(OpKind::Where, {a.id(), fallback.id()}, std::move(out),
                     [mask](const Tensor &g, GradSink &sink) {
                       const bool wa = sink.wants(0), wf = sink.wants(1);
                       for (std::size_t i = 0; i < mask.size(); ++i) {
                         if (mask[i] && wa)
                           sink[0][i] += g[i];
                         else if (!mask[i] && wf)
                           sink[1][i] += g[i];
                       }
                     });
}

Var gather(const Var &a, const std::vector<std::size_t> &index) {
  Tape &tape = a.tape();
  const Tensor &x = a.value();
  if (x.rank() != 2 || index.size() != x.dim(0))
    throw Error("gather expects a (B,T) array and B indices");
  const std::size_t T = x.dim(1);
  Tensor out({index.size()});
  for (std::size_t b = 0; b < index.size(); ++b) {
    if (index[b] >= T)
      throw Error("gather index out of range");
    out[b] = x[b * T + index[b]];
  }
  return tape.record(OpKind::Gather, {a.id()}, std::move(out),
                     [index, T](const Tensor &g, GradSink &sink) {
                       Tensor &gx = sink[0];
                       for (std::size_t b = 0; b < index.size(); ++b)
                         gx[b * T + index[b]] += g[b];
                     });
}

Var weighted_sum(std::span<const Var> ops, double weight) {
  check_same_shapes(ops, OpKind::WeightedSum);
  Tape &tape = ops[0].tape();
  Tensor out(ops[0].shape(), 0.0);
  std::vector<NodeId> parents;
  parents.reserve(ops.size());
  for (const Var &v : ops) {
    parents.push_back(v.id());
    const Tensor &x = v.value();
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] += weight * x[i];
  }
  const std::size_t k = ops.size();
  return tape.record(OpKind::WeightedSum, std::move(parents), std::move(out),
                     [k, weight](const Tensor &g, GradSink &sink) {
                       for (std::size_t j = 0; j < k; ++j) {
                         if (!sink.wants(j))
                           continue;
                         Tensor &gj = sink[j];
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gj[i] += weight * g[i];
                       }
                     });
}

Var clamp(const Var &a, double lo, double hi) {
  Tape &tape = a.tape();
  for (double v : a.value().data())
    tape.note_branch(v < lo ? 1 : v > hi ? 2 : 0);
  return unary(
      OpKind::Clamp, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return x < lo || x > hi ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckResult grad_check(const LossBuilder &f, const Tensor &x0,
                           double h) {
  GradCheckResult res;

  Tape tape;
  Var x = tape.leaf(x0);
  Var loss = f(tape, x);
  const std::uint64_t branches = tape.branch_digest();
  const Gradients grads = tape.backward(loss);
  const Tensor &g = grads[x];
  res.analytic.assign(g.data().begin(), g.data().end());

  auto eval = [&](const Tensor &at, std::size_t i) {
    Tape t;
    Var xv = t.leaf(at, false);
    const double v = f(t, xv).item();
    if (t.branch_digest() != branches && !res.skipped) {
      res.skipped = true;
      res.kink_index = i;
    }
    return v;
  };

  res.numeric.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Tensor plus = x0, minus = x0;
    plus[i] += h;
    minus[i] -= h;
    res.numeric[i] = (eval(plus, i) - eval(minus, i)) / (2.0 * h);
  }
  if (res.skipped)
    return res;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double a = res.analytic[i], n = res.numeric[i];
    const double err =
        std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = i;
    }
  }
  return res;
}

} // namespace stlgrad::ad
