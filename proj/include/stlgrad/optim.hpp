#pragma once

// Gradient-based optimization on top of the differentiable semantics.

#include "stlgrad/autodiff.hpp"
#include "stlgrad/core.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace stlgrad {

class OptimError : public Error {
public:
  using Error::Error;
};

/// ReLU(m - rho), summed or averaged over the entries of rho.
struct MarginLoss {
  enum class Reduction { Sum, Mean };
  double m = 0.0;
  Reduction reduction = Reduction::Sum;

  double operator()(std::span<const double> rho) const;
  ad::Var operator()(const ad::Var &rho) const;
};

/// w_k = min(w0 * growth^k, w_max).
struct AnnealSchedule {
  double w0 = 1.0;
  double growth = 1.05;
  double w_max = 50.0;

  static AnnealSchedule constant(double w) { return {w, 1.0, w}; }
  double at(std::size_t iter) const;
  void validate() const;
};

struct DescentOptions {
  double step = 0.05;
  std::size_t max_iters = 1000;
  AnnealSchedule anneal = AnnealSchedule::constant(1.0);
  /// Heavy-ball coefficient; 0 gives plain gradient descent.
  double momentum = 0.0;
  /// Stop once no coordinate moves by tol or more in one step and the
  /// anneal schedule has reached its cap (0 disables).
  double tol = 0.0;
};

struct DescentResult {
  ad::Tensor x;
  double loss = 0.0;
  std::size_t best_iteration = 0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Loss of every evaluated iterate.
  std::vector<double> history;
  /// Scale the returned iterate was scored at.
  double w = 1.0;
};

/// Scalar loss recorded on `tape` for the point x at smoothing scale w.
using Objective =
    std::function<ad::Var(ad::Tape &tape, const ad::Var &x, double w)>;

/// Plain (or heavy-ball) gradient descent. Returns the lowest-loss iterate
/// among those scored at the final scale, so annealing cannot make an early
/// low-w iterate win. A NaN or infinite loss or gradient throws OptimError.
DescentResult gradient_descent(const Objective &f, ad::Tensor x0,
                               const DescentOptions &opt = {});

// ---------------------------------------------------------------------------
// Parametric STL
// ---------------------------------------------------------------------------

/// How robustness changes as a threshold parameter grows.
enum class Monotonicity { Increasing, Decreasing, Mixed, Absent };

/// Sign analysis through the formula: negations and implication premises
/// flip, integrals follow the sign of their weight.
Monotonicity parameter_monotonicity(const Formula &f, std::string_view name);

/// Initial value of every named threshold (first occurrence wins).
std::map<std::string, double, std::less<>> parameter_initial_values(const Formula &f);

struct PstlProblem {
  Formula templ = Formula::truth();
  Signal data = Signal::scalar({0.0});
  /// Declared monotonicity per parameter; missing entries are inferred.
  std::map<std::string, Monotonicity, std::less<>> monotone;
};

struct PstlOptions {
  double step = 5e-4;
  std::size_t max_iters = 200000;
  double tol = 1e-6;
  EvalConfig cfg;
  AnnealSchedule anneal = AnnealSchedule::constant(1.0);
};

struct PstlFit {
  /// Fitted value per parameter and batch element.
  std::map<std::string, std::vector<double>, std::less<>> params;
  /// Exact robustness at the fitted parameters.
  std::vector<double> robustness;
  std::size_t iterations = 0;
  bool converged = false;
  double seconds = 0.0;
};

/// Minimises sum_j ReLU(-rho(s_j, template)) over one parameter vector per
/// signal, with all signals in one batched graph.
PstlFit fit_pstl(const PstlProblem &p, const PstlOptions &opt = {});

struct BisectOptions {
  double tol = 1e-9;
  /// Largest bracket half-width tried before giving up.
  double max_bracket = 1e9;
  EvalConfig cfg;
};

/// Per signal and parameter, the smallest satisfying value (largest for
/// decreasing parameters) found by bisection on a geometrically grown
/// bracket. Parameters are solved in name order, each with the others at
/// their already-solved or initial values.
PstlFit fit_pstl_bisect(const PstlProblem &p, const BisectOptions &opt = {});

/// Unit step response of x'' + 2 zeta omega x' + omega^2 x = omega^2.
double step_response(double omega, double zeta, double t);

struct StepResponseOptions {
  std::size_t count = 100;
  std::size_t samples = 100;
  double dt = 1.0;
  double omega_lo = 0.5, omega_hi = 2.0;
  double zeta_lo = 0.2, zeta_hi = 1.5;
  std::uint64_t seed = 0;
};

/// Batch of step responses with uniformly drawn omega and zeta.
Signal step_responses(const StepResponseOptions &opt = {});

// ---------------------------------------------------------------------------
// Trajectory planning
// ---------------------------------------------------------------------------

using Point2 = std::array<double, 2>;

/// Single-integrator planning problem x_{k+1} = x_k + dt u_k with
/// x_0 = start and x_N = goal, written as E z = D with z = (X, U).
struct PlanProblem {
  Point2 start{-1.0, -1.0};
  Point2 goal{1.0, 1.0};
  std::size_t steps = 50;
  double dt = 0.1;
  double u_max = 1.0;
  /// Constraint on the state signal (dimension 2).
  Formula phi = Formula::truth();
  double gamma1 = 0.3;
  double gamma2 = 0.3;
  double margin = 0.05;

  /// always ||u||_2 <= u_max.
  Formula control_constraint() const;
  void validate() const;
};

struct PlanOptions {
  double step = 0.05;
  std::size_t max_iters = 5000;
  AnnealSchedule anneal;
  /// Smoothing used inside the loss; reported robustness is always exact.
  EvalConfig cfg{Approximation::SoftMax, 1.0, {}, 1e6};
  double tol = 1e-9;
  /// Least-squares projection onto E z = D before reporting.
  bool project = true;
};

struct PlanResult {
  std::vector<Point2> states;   // N + 1
  std::vector<Point2> controls; // N
  double rho_phi = 0.0;
  double rho_theta = 0.0;
  /// ||E z - D|| of the reported trajectory and of the raw optimizer output.
  double residual = 0.0;
  double residual_raw = 0.0;
  double loss = 0.0;
  std::size_t iterations = 0;
  std::vector<double> history;

  bool satisfied() const { return rho_phi >= 0.0 && rho_theta >= 0.0; }
};

PlanResult plan(const PlanProblem &p, const PlanOptions &opt = {});

/// Straight line from start to goal at constant speed; satisfies E z = D.
PlanResult straight_line(const PlanProblem &p);

/// Sum of squared second differences of the states.
double smoothness(const std::vector<Point2> &states);

// ---------------------------------------------------------------------------
// Robustness-regularised fitting
// ---------------------------------------------------------------------------

enum class Basis { Chebyshev, PiecewiseLinear };

/// Model f(t) = sum_k theta_k phi_k(t) on [t_lo, t_hi]. Chebyshev uses
/// polynomials of degree < size; piecewise-linear uses `size` evenly spaced
/// hat functions.
struct LinearModel {
  Basis basis = Basis::Chebyshev;
  std::size_t size = 8;
  double t_lo = 0.0;
  double t_hi = 1.0;

  std::vector<double> features(double t) const;
  double operator()(std::span<const double> theta, double t) const;
};

struct RegFitProblem {
  /// Evenly spaced sample times and observations.
  std::vector<double> times;
  std::vector<double> values;
  LinearModel model;
  Formula phi = Formula::truth();
  double gamma = 10.0;
};

struct RegFitOptions {
  double step = 0.01;
  std::size_t max_iters = 3000;
  AnnealSchedule anneal;
  EvalConfig cfg{Approximation::LogSumExp, 1.0, {}, 1e6};
};

struct RegFitResult {
  std::vector<double> theta;
  std::vector<double> output;
  double mse = 0.0;
  /// Exact robustness of the model output.
  double rho = 0.0;
  double violation() const { return rho < 0.0 ? -rho : 0.0; }
  std::size_t iterations = 0;
};

/// Minimises MSE + gamma * ReLU(-rho(f_theta, phi)). The objective is divided
/// by (1 + gamma), which keeps the minimisers and bounds the step for large
/// gamma; descent runs in an orthonormalised feature basis.
RegFitResult regularized_fit(const RegFitProblem &p, const RegFitOptions &opt = {});

/// Plain least squares over the model basis.
std::vector<double> least_squares_fit(const LinearModel &m,
                                      std::span<const double> times,
                                      std::span<const double> values);

struct BumpOptions {
  std::size_t samples = 101;
  double t_end = 5.0;
  double noise = 0.03;
  std::uint64_t seed = 0;
};

/// Noisy signal resting near 0.5 on [1, 3] with bumps on either side.
RegFitProblem bump_problem(const BumpOptions &opt = {});

} // namespace stlgrad
