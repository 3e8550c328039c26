#pragma once

// Quantitative and Boolean semantics.

#include "stlgrad/autodiff.hpp"
#include "stlgrad/core.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stlgrad {

/// Robustness of `f` at every sample of every batch element.
///
/// Thresholds named in `params` take the given values (one broadcast value or
/// one per element); other thresholds keep their initial values. Batch
/// elements are evaluated in parallel, see STLGRAD_THREADS.
RobustnessTrace robustness_trace(const Signal &signal, const Formula &f,
                                 const EvalConfig &cfg = {},
                                 const ParamValues &params = {});

/// Robustness at the first sample, one value per batch element.
std::vector<double> robustness(const Signal &signal, const Formula &f,
                               const EvalConfig &cfg = {},
                               const ParamValues &params = {});

/// Trace of lhs U_iv rhs.
RobustnessTrace until_trace(const Signal &signal, const Formula &lhs,
                            const Formula &rhs, const Interval &iv,
                            const EvalConfig &cfg = {},
                            const ParamValues &params = {});

/// Trace of integral_iv f with the given weight; iv must be bounded.
RobustnessTrace integral_trace(const Signal &signal, const Formula &f,
                               const Interval &iv, IntegralWeight weight = {},
                               const EvalConfig &cfg = {},
                               const ParamValues &params = {});

/// Boolean satisfaction of `f` by element b at its first sample. Predicates
/// respect strict and non-strict comparisons; integrals hold when their
/// robustness is positive.
bool satisfies(const Signal &signal, const Formula &f, std::size_t b = 0,
               const EvalConfig &cfg = {}, const ParamValues &params = {});

/// Boolean trace of element b.
std::vector<bool> satisfaction_trace(const Signal &signal, const Formula &f,
                                     std::size_t b = 0,
                                     const EvalConfig &cfg = {},
                                     const ParamValues &params = {});

/// Reference evaluator that applies the operator definitions directly, with
/// explicit loops over every window. Exact mode only; O(T^3) for until.
RobustnessTrace oracle_robustness(const Signal &signal, const Formula &f,
                                  const EvalConfig &cfg = {},
                                  const ParamValues &params = {});

/// One step of a temporal cell, in processing order (step 0 is the last
/// sample).
struct CellRecord {
  const void *node = nullptr;
  std::size_t step = 0;
  std::size_t time = 0;
  /// Scalar carry of the [a, inf) cell before the step.
  std::optional<double> carry;
  /// Hidden state before the step, h_1 first. For [0, inf) this is the carry.
  std::vector<double> hidden;
  double output = 0.0;
};

using CellObserver = std::function<void(const CellRecord &)>;

/// Cell states of the root temporal operator of `f` while evaluating
/// element b.
std::vector<CellRecord> temporal_cell_history(const Signal &signal,
                                              const Formula &f,
                                              const EvalConfig &cfg = {},
                                              std::size_t b = 0,
                                              const ParamValues &params = {});

// ---------------------------------------------------------------------------
// Differentiable evaluation
// ---------------------------------------------------------------------------

/// Time layout of a (B, T, n) signal variable.
struct SignalLayout {
  double t0 = 0.0;
  double dt = 1.0;
  /// Valid length per element; empty means every element has length T.
  std::vector<std::size_t> lengths;

  static SignalLayout of(const Signal &s) { return {s.t0(), s.dt(), s.lengths()}; }
};

/// Threshold variables, each of shape (1) or (B).
using ParamVars = std::map<std::string, ad::Var, std::less<>>;

/// Records the robustness trace of `f` on the signal's tape. `signal` has
/// shape (B, T, n); the result has shape (B, T). Entries past an element's
/// length are zero.
ad::Var robustness_trace(const ad::Var &signal, const SignalLayout &layout,
                         const Formula &f, const EvalConfig &cfg = {},
                         const ParamVars &params = {});

/// Robustness at the first sample, shape (B).
ad::Var robustness(const ad::Var &signal, const SignalLayout &layout,
                   const Formula &f, const EvalConfig &cfg = {},
                   const ParamVars &params = {});

/// Robustness at the first sample together with the gradient of its sum over
/// the batch, w.r.t. the signal and every parameter listed in `params`.
struct RobustnessGradient {
  std::vector<double> robustness;     // (B)
  std::vector<double> signal;         // (B, T, n)
  std::map<std::string, std::vector<double>, std::less<>> params;
};

RobustnessGradient robustness_gradient(const Signal &signal, const Formula &f,
                                       const EvalConfig &cfg = {},
                                       const ParamValues &params = {});

/// Worker count for batch-parallel loops: STLGRAD_THREADS when set, else the
/// hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on worker_count() threads. The first exception
/// thrown by any call is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

} // namespace stlgrad
