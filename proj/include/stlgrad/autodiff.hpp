#pragma once

// Reverse-mode automatic differentiation over small dense arrays.
//
// A Tape records every operation in evaluation order. Values are immutable
// once recorded; backward() walks the tape once in reverse insertion order and
// returns gradients for every leaf created with requires_grad.

#include "stlgrad/core.hpp"
#include "stlgrad/smooth.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stlgrad::ad {

class Error : public stlgrad::Error {
public:
  using stlgrad::Error::Error;
};

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double item() const;

private:
  Shape shape_;
  std::vector<double> data_;
};

using NodeId = std::size_t;

enum class OpKind {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Exp,
  Log,
  Relu,
  Sqrt,
  Abs,
  MaxReduce,
  MinReduce,
  SoftMax,
  SoftMin,
  Sum,
  Dot,
  Shift,
  Select,
  Stack,
  Repeat,
  Where,
  Gather,
  WindowReduce,
  WeightedSum,
  Clamp,
  Custom,
};

std::string_view op_kind_name(OpKind kind);

class Tape;

/// Handle to a value recorded on a tape.
class Var {
public:
  Var() = default;

  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }
  double item() const { return value().item(); }
  NodeId id() const { return id_; }
  Tape &tape() const { return *tape_; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape *tape, NodeId id) : tape_(tape), id_(id) {}
  Tape *tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradient accumulators of a node's parents, handed to its VJP rule.
class GradSink {
public:
  /// Accumulator for parent `i` (zero-initialised on first use).
  Tensor &operator[](std::size_t i);
  bool wants(std::size_t i) const;

private:
  friend class Tape;
  GradSink(Tape &tape, NodeId node) : tape_(tape), node_(node) {}
  Tape &tape_;
  NodeId node_;
};

/// Vector-Jacobian product: receives d(loss)/d(output) and accumulates into
/// the parents.
using Vjp = std::function<void(const Tensor &grad_out, GradSink &sink)>;

/// Gradients of a scalar loss w.r.t. the leaves of a tape.
class Gradients {
public:
  /// Gradient of `leaf`; zeros when the leaf did not influence the loss.
  const Tensor &operator[](const Var &leaf) const;
  bool contains(NodeId id) const { return grads_.count(id) != 0; }

private:
  friend class Tape;
  std::unordered_map<NodeId, Tensor> grads_;
  mutable std::unordered_map<NodeId, Tensor> zeros_;
  const Tape *tape_ = nullptr;
};

class Tape {
public:
  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);

  /// Records a parameterless op (add, sub, mul, div, neg, exp, log, relu,
  /// sqrt, abs, max-reduce, min-reduce, sum, dot) on the given inputs.
  Var record(OpKind kind, std::span<const Var> inputs);

  /// Records an op with an explicit forward value and VJP rule.
  Var record(OpKind kind, std::vector<NodeId> parents, Tensor value, Vjp vjp);

  /// Reverse pass from a scalar loss. A tape can be consumed once.
  Gradients backward(const Var &loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId> &parents(NodeId id) const {
    return nodes_.at(id).parents;
  }
  const Tensor &value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Hash of every discrete choice made while recording (exact argmax and
  /// argmin picks, ReLU/abs signs, predicate branches). Two evaluations with
  /// equal digests followed the same smooth piece.
  std::uint64_t branch_digest() const { return digest_; }
  void note_branch(std::uint64_t choice) {
    digest_ = (digest_ ^ (choice + 1)) * 0x100000001b3ULL;
  }

private:
  friend class GradSink;
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<NodeId> parents;
    Vjp vjp;
    bool requires_grad = false;
    bool leaf = false;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool consumed_ = false;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
};

// Elementwise arithmetic. Binary ops accept equal shapes or a size-1 operand.
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
/// Throws ad::Error when any denominator is exactly zero.
Var div(const Var &a, const Var &b);
Var neg(const Var &a);
Var scale(const Var &a, double k);
Var exp(const Var &a);
Var log(const Var &a);
Var relu(const Var &a);
Var sqrt(const Var &a);
Var abs(const Var &a);

/// Sum of all entries (scalar).
Var sum(const Var &a);
/// Inner product of two equal-shaped arrays (scalar).
Var dot(const Var &a, const Var &b);

/// Elementwise reduction across equal-shaped operands, e.g. max over the
/// columns feeding one recurrent cell. Exact ties go to the first operand.
Var reduce(const Reduction &r, std::span<const Var> operands);
Var max_reduce(std::span<const Var> operands);
Var min_reduce(std::span<const Var> operands);
Var soft_max(std::span<const Var> operands, double w);
Var soft_min(std::span<const Var> operands, double w);

/// Reduction over all entries of one array (scalar result).
Var reduce_all(const Reduction &r, const Var &a);

/// Window shift on a (B, K) array: drops column 0, moves the remaining
/// columns one slot towards the front and writes `u` (shape (B)) into the
/// last column.
Var shift(const Var &window, const Var &u);

/// Reduction over columns [0, count) of a (B, K) window, visited from
/// column count-1 down to 0, optionally preceded by `lead` (shape (B)).
/// Exact ties go to the first visited operand.
Var window_reduce(const Reduction &r, const Var &window, std::size_t count,
                  const std::optional<Var> &lead);

/// Slice `index` along `axis`; the axis is dropped.
Var select(const Var &a, std::size_t axis, std::size_t index);

/// Stacks equal-shaped arrays along a new trailing axis.
Var stack(std::span<const Var> columns);

/// (B) -> (B, k) by repeating each entry.
Var repeat(const Var &a, std::size_t k);

/// Entry b of the result is a[b] where mask[b] is set, else fallback[b].
Var where(const std::vector<std::uint8_t> &mask, const Var &a,
          const Var &fallback);

/// (B, T) -> (B): entry b is a[b, index[b]].
Var gather(const Var &a, const std::vector<std::size_t> &index);

/// weight * sum of equal-shaped operands, accumulated in operand order as
/// acc += weight * x_i.
Var weighted_sum(std::span<const Var> operands, double weight);

/// Elementwise clamp to [lo, hi]; saturated entries get zero gradient.
Var clamp(const Var &a, double lo, double hi);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

using LossBuilder = std::function<Var(Tape &, const Var &x)>;

struct GradCheckResult {
  /// Worst |analytic - numeric| / max(1, |analytic|, |numeric|).
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  /// A perturbation of +-h switched some branch (a tie or kink lies within h
  /// of x0); the comparison was skipped.
  bool skipped = false;
  /// First coordinate whose perturbation switched a branch.
  std::size_t kink_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares backward() against central differences with step h. When a
/// perturbation changes the tape's branch digest the point is treated as
/// nondifferentiable and the check is skipped.
GradCheckResult grad_check(const LossBuilder &f, const Tensor &x0,
                           double h = 1e-5);

} // namespace stlgrad::ad
