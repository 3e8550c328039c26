#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace stlgrad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid construction of a domain object (bad shape, bad interval, ...).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Raised while evaluating a formula against a signal.
class EvalError : public Error {
public:
  using Error::Error;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Signal
// ---------------------------------------------------------------------------

/// Uniformly sampled, batched, multivariate time series.
///
/// Values are stored row-major with shape (batch, time, dim). Sample i of
/// every element sits at time t0 + i * dt. Elements of a padded batch may
/// be shorter than `time()`; `length(b)` gives the valid prefix.
class Signal {
public:
  Signal(std::size_t batch, std::size_t time, std::size_t dim,
         std::vector<double> values, double t0 = 0.0, double dt = 1.0,
         std::vector<std::size_t> lengths = {});

  /// Single-element, one-dimensional signal.
  static Signal scalar(std::vector<double> samples, double dt = 1.0,
                       double t0 = 0.0);

  /// Single-element signal from a list of states.
  static Signal from_states(const std::vector<std::vector<double>> &states,
                            double dt = 1.0, double t0 = 0.0);

  /// Pads a list of single-element signals (same dim, t0 and dt) into one
  /// batch. Tails are filled with each element's last state.
  static Signal batch_of(const std::vector<Signal> &elements);

  std::size_t batch() const { return batch_; }
  std::size_t time() const { return time_; }
  std::size_t dim() const { return dim_; }
  double t0() const { return t0_; }
  double dt() const { return dt_; }
  std::size_t length(std::size_t b) const { return lengths_[b]; }
  const std::vector<std::size_t> &lengths() const { return lengths_; }
  bool uniform_length() const;

  double at(std::size_t b, std::size_t i, std::size_t k) const {
    return values_[(b * time_ + i) * dim_ + k];
  }
  std::span<const double> state(std::size_t b, std::size_t i) const {
    return {values_.data() + (b * time_ + i) * dim_, dim_};
  }
  std::span<const double> values() const { return values_; }
  double time_of(std::size_t i) const {
    return t0_ + static_cast<double>(i) * dt_;
  }

  /// Suffix starting at sample i; t0 advances by i * dt.
  Signal subsignal(std::size_t i) const;

  /// Element b as a standalone signal truncated to its valid length.
  Signal element(std::size_t b) const;

private:
  std::size_t batch_;
  std::size_t time_;
  std::size_t dim_;
  std::vector<double> values_;
  double t0_;
  double dt_;
  std::vector<std::size_t> lengths_;
};

// ---------------------------------------------------------------------------
// Interval
// ---------------------------------------------------------------------------

/// Time interval [a, b] with 0 <= a <= b, b possibly infinite.
class Interval {
public:
  /// The positive ray [0, inf).
  Interval() = default;
  Interval(double a, double b);

  static Interval unbounded_from(double a) { return {a, kInfinity}; }

  double lower() const { return a_; }
  double upper() const { return b_; }
  bool bounded() const { return b_ != kInfinity; }
  bool is_positive_ray() const { return a_ == 0.0 && !bounded(); }

  friend bool operator==(const Interval &, const Interval &) = default;

private:
  double a_ = 0.0;
  double b_ = kInfinity;
};

/// Sample counts of an interval bound to a sampling period.
///   n_b: samples in [0, b] (empty when b is infinite)
///   n_a: samples in [0, a]
///   m:   samples in [a, b] (empty when b is infinite)
struct IntervalCounts {
  std::optional<std::size_t> n_b;
  std::size_t n_a = 1;
  std::optional<std::size_t> m;

  std::size_t lower_steps() const { return n_a - 1; }
  std::optional<std::size_t> upper_steps() const {
    if (!n_b)
      return std::nullopt;
    return *n_b - 1;
  }
};

/// Converts interval bounds to sample counts; bounds must be multiples of dt
/// within 1e-9 * dt.
IntervalCounts interval_to_counts(const Interval &iv, double dt);

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

/// Scalar functions of the state used by predicates.
namespace mu {

/// x_k
struct Coordinate {
  std::size_t index = 0;
  friend bool operator==(const Coordinate &, const Coordinate &) = default;
};

/// sum_k coeffs[k] * x_{indices[k]} + offset
struct Affine {
  std::vector<std::size_t> indices;
  std::vector<double> coeffs;
  double offset = 0.0;
  friend bool operator==(const Affine &, const Affine &) = default;
};

/// ||x_S - center||_2 over the coordinates in `indices`.
struct Norm {
  std::vector<std::size_t> indices;
  std::vector<double> center;
  friend bool operator==(const Norm &, const Norm &) = default;
};

/// |x_k - reference|
struct AbsDeviation {
  std::size_t index = 0;
  double reference = 0.0;
  friend bool operator==(const AbsDeviation &, const AbsDeviation &) = default;
};

/// Signed margin to an axis-aligned box: min over axes of
/// min(x_k - lo_k, hi_k - x_k). Positive strictly inside.
struct BoxMargin {
  std::vector<std::size_t> indices;
  std::vector<double> lo;
  std::vector<double> hi;
  friend bool operator==(const BoxMargin &, const BoxMargin &) = default;
};

} // namespace mu

using Mu = std::variant<mu::Coordinate, mu::Affine, mu::Norm, mu::AbsDeviation,
                        mu::BoxMargin>;

/// Evaluates mu at one state.
double evaluate_mu(const Mu &m, std::span<const double> state);

/// Gradient of mu at one state, written into `grad` (size = state dim).
/// Kinks (box corners, |0|, norm at the center) take the lowest-index branch.
void mu_gradient(const Mu &m, std::span<const double> state,
                 std::span<double> grad);

/// Index of the smooth piece of mu that contains the state (0 for smooth mu).
std::size_t mu_branch(const Mu &m, std::span<const double> state);

/// Largest state index referenced by mu, plus one.
std::size_t mu_required_dim(const Mu &m);

enum class Comparison { Greater, GreaterEq, Less, LessEq };

/// True for > and >=, whose robustness is mu - c.
constexpr bool is_lower_bound(Comparison c) {
  return c == Comparison::Greater || c == Comparison::GreaterEq;
}

/// Threshold: a fixed number or a named learnable parameter with an initial
/// value.
struct Threshold {
  double value = 0.0;
  std::optional<std::string> parameter;
  friend bool operator==(const Threshold &, const Threshold &) = default;
};

struct Predicate {
  Mu mu;
  Comparison comparison = Comparison::Greater;
  Threshold threshold;

  /// Robustness mu(x) - c (or c - mu(x)) for threshold value c.
  double robustness(std::span<const double> state, double c) const;
  /// Boolean semantics, strict vs non-strict respected at equality.
  bool holds(std::span<const double> state, double c) const;

  friend bool operator==(const Predicate &, const Predicate &) = default;
};

// ---------------------------------------------------------------------------
// Formula
// ---------------------------------------------------------------------------

enum class Op {
  True,
  Pred,
  Not,
  And,
  Or,
  Implies,
  Eventually,
  Always,
  Integral,
  Until
};

std::string_view op_name(Op op);
std::size_t op_arity(Op op);
bool op_has_interval(Op op);

/// Weight of the integral operator: a constant, optionally scaled by 1/dt.
struct IntegralWeight {
  double scale = 1.0;
  bool per_dt = false;

  double value(double dt) const { return per_dt ? scale / dt : scale; }
  friend bool operator==(const IntegralWeight &,
                         const IntegralWeight &) = default;
};

/// Byte offsets [start, end) into the formula text a node was parsed from.
struct SourceSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const SourceSpan &, const SourceSpan &) = default;
};

/// Immutable STL formula tree. Copies share structure.
class Formula {
public:
  static Formula truth();
  static Formula predicate(Predicate p);
  static Formula negation(Formula f);
  static Formula conjunction(Formula lhs, Formula rhs);
  static Formula disjunction(Formula lhs, Formula rhs);
  static Formula implication(Formula lhs, Formula rhs);
  static Formula eventually(Formula f, Interval iv = {});
  static Formula always(Formula f, Interval iv = {});
  static Formula integral(Formula f, Interval iv, IntegralWeight weight = {});
  static Formula until(Formula lhs, Formula rhs, Interval iv = {});

  Op op() const;
  std::size_t arity() const { return op_arity(op()); }
  const Formula &child(std::size_t i) const;
  const Interval &interval() const;
  const Predicate &predicate() const;
  const IntegralWeight &weight() const;

  SourceSpan span() const;
  Formula with_span(SourceSpan span) const;

  /// Names of learnable thresholds, sorted, without duplicates.
  std::vector<std::string> parameters() const;
  /// Minimum signal dimension needed to evaluate every predicate.
  std::size_t required_dim() const;
  /// Number of nodes in the tree.
  std::size_t size() const;
  std::size_t depth() const;

  /// Structural equality; spans are ignored.
  friend bool operator==(const Formula &a, const Formula &b);

  /// Node identity (shared subtrees compare equal).
  const void *id() const { return node_.get(); }

  struct Node; // opaque, defined in core.cpp

private:
  explicit Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

// ---------------------------------------------------------------------------
// Evaluation configuration and results
// ---------------------------------------------------------------------------

enum class Approximation { Exact, SoftMax, LogSumExp };

struct Padding {
  enum class Kind { LastValue, Constant };
  Kind kind = Kind::LastValue;
  double value = 0.0;

  static Padding last_value() { return {}; }
  static Padding constant(double r) { return {Kind::Constant, r}; }
  friend bool operator==(const Padding &, const Padding &) = default;
};

struct EvalConfig {
  Approximation mode = Approximation::Exact;
  double w = 1.0;
  Padding padding;
  /// Robustness of true; integral outputs are clamped to [-rho_max, rho_max].
  double rho_max = 1e6;

  /// Throws InvalidArgument when w < 0, rho_max <= 0, or logsumexp is
  /// requested with w == 0.
  void validate() const;
};

/// Learnable parameter values: one value (broadcast) or one per batch element.
using ParamValues = std::map<std::string, std::vector<double>, std::less<>>;

/// Robustness of a formula for every subsignal of every batch element.
/// Entries past an element's valid length are NaN.
struct RobustnessTrace {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::vector<double> values; // (batch, time)
  std::vector<std::size_t> lengths;
  double t0 = 0.0;
  double dt = 1.0;
  Formula formula = Formula::truth();

  double at(std::size_t b, std::size_t i) const { return values[b * time + i]; }
  std::span<const double> row(std::size_t b) const {
    return {values.data() + b * time, lengths[b]};
  }
};

} // namespace stlgrad
