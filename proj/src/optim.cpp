#include "stlgrad/optim.hpp"

#include "stlgrad/semantics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace stlgrad {

using ad::Tensor;
using ad::Var;

// ---------------------------------------------------------------------------
// Losses and schedules

double MarginLoss::operator()(std::span<const double> rho) const {
  double total = 0.0;
  for (double r : rho)
    total += std::max(0.0, m - r);
  if (reduction == Reduction::Mean && !rho.empty())
    total /= static_cast<double>(rho.size());
  return total;
}

Var MarginLoss::operator()(const Var &rho) const {
  Var m_var = rho.tape().constant(Tensor(rho.shape(), m));
  Var total = ad::sum(ad::relu(ad::sub(m_var, rho)));
  if (reduction == Reduction::Mean)
    total = ad::scale(total, 1.0 / static_cast<double>(rho.value().size()));
  return total;
}

double AnnealSchedule::at(std::size_t iter) const {
  const double w = w0 * std::pow(growth, static_cast<double>(iter));
  return std::min(w, w_max);
}

void AnnealSchedule::validate() const {
  if (!(w0 >= 0.0) || !std::isfinite(w0))
    throw InvalidArgument("anneal w0 must be finite and >= 0");
  if (!(growth >= 1.0) || !std::isfinite(growth))
    throw InvalidArgument("anneal growth must be >= 1");
  if (!(w_max >= w0) || !std::isfinite(w_max))
    throw InvalidArgument("anneal w_max must be finite and >= w0");
}

// ---------------------------------------------------------------------------
// Gradient descent

DescentResult gradient_descent(const Objective &f, Tensor x0,
                               const DescentOptions &opt) {
  if (!(opt.step > 0.0))
    throw InvalidArgument("step size must be positive");
  if (!(opt.momentum >= 0.0 && opt.momentum < 1.0))
    throw InvalidArgument("momentum must lie in [0, 1)");
  opt.anneal.validate();

  DescentResult res;
  res.x = x0;
  res.loss = kInfinity;
  Tensor x = std::move(x0);
  std::vector<double> velocity(x.size(), 0.0);
  double best_w = -1.0;

  for (std::size_t k = 0;; ++k) {
    const double w = opt.anneal.at(k);
    ad::Tape tape;
    Var xv = tape.leaf(x);
    Var loss = f(tape, xv, w);
    if (loss.value().size() != 1)
      throw OptimError("objective must return a scalar");
    const double value = loss.item();
    if (!std::isfinite(value))
      throw OptimError("loss is not finite at iteration " + std::to_string(k));
    res.history.push_back(value);
    if (w != best_w || value < res.loss) {
      best_w = w;
      res.loss = value;
      res.x = x;
      res.best_iteration = k;
      res.w = w;
    }
    res.iterations = k;
    if (k == opt.max_iters)
      break;

    const auto grads = tape.backward(loss);
    const Tensor &g = grads[xv];
    double largest = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw OptimError("gradient is not finite at iteration " + std::to_string(k));
      velocity[i] = opt.momentum * velocity[i] - opt.step * g[i];
      x[i] += velocity[i];
      largest = std::max(largest, std::abs(velocity[i]));
    }
    if (opt.tol > 0.0 && largest < opt.tol && opt.anneal.at(k + 1) == w) {
      res.converged = true;
      res.iterations = k + 1;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Parametric STL

namespace {

void collect_polarity(const Formula &f, std::string_view name, int sign,
                      bool &up, bool &down) {
  switch (f.op()) {
  case Op::True:
    return;
  case Op::Pred: {
    const Predicate &p = f.predicate();
    if (p.threshold.parameter && *p.threshold.parameter == name) {
      const int s = is_lower_bound(p.comparison) ? -sign : sign;
      (s > 0 ? up : down) = true;
    }
    return;
  }
  case Op::Not:
    collect_polarity(f.child(0), name, -sign, up, down);
    return;
  case Op::Implies:
    collect_polarity(f.child(0), name, -sign, up, down);
    collect_polarity(f.child(1), name, sign, up, down);
    return;
  case Op::Integral: {
    const double wscale = f.weight().scale;
    if (wscale != 0.0)
      collect_polarity(f.child(0), name, wscale > 0 ? sign : -sign, up, down);
    return;
  }
  default:
    for (std::size_t i = 0; i < f.arity(); ++i)
      collect_polarity(f.child(i), name, sign, up, down);
  }
}

void collect_initial(const Formula &f, std::map<std::string, double, std::less<>> &out) {
  if (f.op() == Op::Pred) {
    const Threshold &t = f.predicate().threshold;
    if (t.parameter)
      out.emplace(*t.parameter, t.value);
    return;
  }
  for (std::size_t i = 0; i < f.arity(); ++i)
    collect_initial(f.child(i), out);
}

// Resolves the direction of every template parameter, checking declared
// flags against the formula.
std::map<std::string, Monotonicity, std::less<>>
resolve_monotonicity(const PstlProblem &p) {
  std::map<std::string, Monotonicity, std::less<>> out;
  const auto names = p.templ.parameters();
  for (const auto &[name, flag] : p.monotone)
    if (std::find(names.begin(), names.end(), name) == names.end())
      throw OptimError("parameter '" + name + "' does not appear in the template");
  for (const auto &name : names) {
    const Monotonicity inferred = parameter_monotonicity(p.templ, name);
    Monotonicity m = inferred;
    if (auto it = p.monotone.find(name); it != p.monotone.end()) {
      m = it->second;
      if (m == Monotonicity::Mixed || m == Monotonicity::Absent)
        throw OptimError("parameter '" + name + "' is not flagged monotone");
      if (inferred != m)
        throw OptimError("parameter '" + name +
                         "' is flagged with a direction the template contradicts");
    }
    out.emplace(name, m);
  }
  return out;
}

Tensor signal_tensor(const Signal &s) {
  const auto v = s.values();
  return Tensor({s.batch(), s.time(), s.dim()}, std::vector<double>(v.begin(), v.end()));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

Monotonicity parameter_monotonicity(const Formula &f, std::string_view name) {
  bool up = false, down = false;
  collect_polarity(f, name, 1, up, down);
  if (up && down)
    return Monotonicity::Mixed;
  if (up)
    return Monotonicity::Increasing;
  if (down)
    return Monotonicity::Decreasing;
  return Monotonicity::Absent;
}

std::map<std::string, double, std::less<>> parameter_initial_values(const Formula &f) {
  std::map<std::string, double, std::less<>> out;
  collect_initial(f, out);
  return out;
}

PstlFit fit_pstl(const PstlProblem &p, const PstlOptions &opt) {
  const auto start = std::chrono::steady_clock::now();
  const auto names = p.templ.parameters();
  if (names.empty())
    throw OptimError("template has no parameters to fit");
  const auto init = parameter_initial_values(p.templ);
  const std::size_t B = p.data.batch(), P = names.size();

  Tensor x0({P, B});
  for (std::size_t j = 0; j < P; ++j)
    for (std::size_t b = 0; b < B; ++b)
      x0[j * B + b] = init.at(names[j]);

  const Tensor sig = signal_tensor(p.data);
  const SignalLayout layout = SignalLayout::of(p.data);
  const MarginLoss hinge{};
  auto objective = [&](ad::Tape &tape, const Var &x, double w) {
    EvalConfig cfg = opt.cfg;
    if (cfg.mode != Approximation::Exact)
      cfg.w = w;
    ParamVars vars;
    for (std::size_t j = 0; j < P; ++j)
      vars.emplace(names[j], ad::select(x, 0, j));
    return hinge(robustness(tape.constant(sig), layout, p.templ, cfg, vars));
  };

  DescentOptions dopt;
  dopt.step = opt.step;
  dopt.max_iters = opt.max_iters;
  dopt.tol = opt.tol;
  dopt.anneal = opt.cfg.mode == Approximation::Exact ? AnnealSchedule::constant(1.0)
                                                     : opt.anneal;
  const DescentResult d = gradient_descent(objective, std::move(x0), dopt);

  PstlFit fit;
  ParamValues values;
  for (std::size_t j = 0; j < P; ++j) {
    std::vector<double> v(d.x.data().begin() + static_cast<std::ptrdiff_t>(j * B),
                          d.x.data().begin() + static_cast<std::ptrdiff_t>((j + 1) * B));
    values[names[j]] = v;
    fit.params[names[j]] = std::move(v);
  }
  fit.robustness = robustness(p.data, p.templ, {}, values);
  fit.iterations = d.iterations;
  fit.converged = d.converged;
  fit.seconds = seconds_since(start);
  return fit;
}

PstlFit fit_pstl_bisect(const PstlProblem &p, const BisectOptions &opt) {
  const auto start = std::chrono::steady_clock::now();
  if (!(opt.tol > 0.0))
    throw InvalidArgument("bisection tolerance must be positive");
  const auto names = p.templ.parameters();
  if (names.empty())
    throw OptimError("template has no parameters to fit");
  const auto dirs = resolve_monotonicity(p);
  for (const auto &[name, m] : dirs)
    if (m != Monotonicity::Increasing && m != Monotonicity::Decreasing)
      throw OptimError("parameter '" + name + "' is not monotone in the template");
  const auto init = parameter_initial_values(p.templ);

  PstlFit fit;
  for (const auto &name : names)
    fit.params[name].assign(p.data.batch(), init.at(name));
  fit.robustness.resize(p.data.batch());

  for (std::size_t b = 0; b < p.data.batch(); ++b) {
    const Signal s = p.data.element(b);
    ParamValues values;
    for (const auto &name : names)
      values[name] = {init.at(name)};
    for (const auto &name : names) {
      // Work in u with rho nondecreasing in u.
      const double sign = dirs.at(name) == Monotonicity::Increasing ? 1.0 : -1.0;
      auto rho = [&](double u) {
        values[name] = {sign * u};
        return robustness(s, p.templ, opt.cfg, values)[0];
      };
      const double u0 = sign * init.at(name);
      double lo = u0, hi = u0;
      if (rho(u0) >= 0.0) {
        for (double d = 1.0;; d *= 2.0) {
          if (d > opt.max_bracket)
            throw OptimError("no violating value of '" + name + "' within the bracket bound");
          hi = lo;
          lo = u0 - d;
          if (rho(lo) < 0.0)
            break;
        }
      } else {
        for (double d = 1.0;; d *= 2.0) {
          if (d > opt.max_bracket)
            throw OptimError("no satisfying value of '" + name + "' within the bracket bound");
          lo = hi;
          hi = u0 + d;
          if (rho(hi) >= 0.0)
            break;
        }
      }
      while (hi - lo > opt.tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
          break;
        (rho(mid) >= 0.0 ? hi : lo) = mid;
      }
      values[name] = {sign * hi};
      fit.params[name][b] = sign * hi;
    }
    fit.robustness[b] = robustness(s, p.templ, opt.cfg, values)[0];
  }
  fit.converged = true;
  fit.seconds = seconds_since(start);
  return fit;
}

double step_response(double omega, double zeta, double t) {
  if (std::abs(zeta - 1.0) < 1e-9)
    return 1.0 - std::exp(-omega * t) * (1.0 + omega * t);
  if (zeta < 1.0) {
    const double root = std::sqrt(1.0 - zeta * zeta);
    const double wd = omega * root;
    return 1.0 - std::exp(-zeta * omega * t) *
                     (std::cos(wd * t) + zeta / root * std::sin(wd * t));
  }
  const double root = std::sqrt(zeta * zeta - 1.0);
  const double p1 = -omega * (zeta - root), p2 = -omega * (zeta + root);
  return 1.0 + (p2 * std::exp(p1 * t) - p1 * std::exp(p2 * t)) / (p1 - p2);
}

Signal step_responses(const StepResponseOptions &opt) {
  if (opt.count == 0 || opt.samples == 0)
    throw InvalidArgument("dataset needs at least one signal and one sample");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> omega(opt.omega_lo, opt.omega_hi);
  std::uniform_real_distribution<double> zeta(opt.zeta_lo, opt.zeta_hi);
  std::vector<double> values(opt.count * opt.samples);
  for (std::size_t b = 0; b < opt.count; ++b) {
    const double w = omega(rng), z = zeta(rng);
    for (std::size_t i = 0; i < opt.samples; ++i)
      values[b * opt.samples + i] = step_response(w, z, static_cast<double>(i) * opt.dt);
  }
  return Signal(opt.count, opt.samples, 1, std::move(values), 0.0, opt.dt);
}

// ---------------------------------------------------------------------------
// Planning

namespace {

// y = A x + b reshaped to `shape`; x is flat.
Var affine_map(const Var &x, const Eigen::MatrixXd &A, const Eigen::VectorXd &b,
               ad::Shape shape) {
  const auto &xv = x.value();
  const Eigen::Map<const Eigen::VectorXd> xe(xv.data().data(),
                                             static_cast<Eigen::Index>(xv.size()));
  const Eigen::VectorXd y = A * xe + b;
  Tensor out(std::move(shape), std::vector<double>(y.data(), y.data() + y.size()));
  return x.tape().record(ad::OpKind::Custom, {x.id()}, std::move(out),
                         [A](const Tensor &g, ad::GradSink &sink) {
                           if (!sink.wants(0))
                             return;
                           const Eigen::Map<const Eigen::VectorXd> ge(
                               g.data().data(), static_cast<Eigen::Index>(g.size()));
                           const Eigen::VectorXd gx = A.transpose() * ge;
                           Tensor &acc = sink[0];
                           for (Eigen::Index i = 0; i < gx.size(); ++i)
                             acc[static_cast<std::size_t>(i)] += gx[i];
                         });
}

struct PlanMatrices {
  std::size_t N = 0;
  Eigen::MatrixXd E, Sx, Su;
  Eigen::VectorXd D;
};

// z = (x_0, ..., x_N, u_0, ..., u_{N-1}), two coordinates each.
PlanMatrices plan_matrices(const PlanProblem &p) {
  PlanMatrices m;
  const auto N = static_cast<Eigen::Index>(p.steps);
  m.N = p.steps;
  const Eigen::Index nz = 2 * (N + 1) + 2 * N;
  const Eigen::Index rows = 2 * N + 4;
  m.E = Eigen::MatrixXd::Zero(rows, nz);
  m.D = Eigen::VectorXd::Zero(rows);
  auto xi = [](Eigen::Index k, Eigen::Index c) { return 2 * k + c; };
  auto ui = [N](Eigen::Index k, Eigen::Index c) { return 2 * (N + 1) + 2 * k + c; };
  Eigen::Index r = 0;
  for (Eigen::Index k = 0; k < N; ++k)
    for (Eigen::Index c = 0; c < 2; ++c, ++r) {
      m.E(r, xi(k + 1, c)) = 1.0;
      m.E(r, xi(k, c)) = -1.0;
      m.E(r, ui(k, c)) = -p.dt;
    }
  for (Eigen::Index c = 0; c < 2; ++c, ++r) {
    m.E(r, xi(0, c)) = 1.0;
    m.D(r) = p.start[static_cast<std::size_t>(c)];
  }
  for (Eigen::Index c = 0; c < 2; ++c, ++r) {
    m.E(r, xi(N, c)) = 1.0;
    m.D(r) = p.goal[static_cast<std::size_t>(c)];
  }
  m.Sx = Eigen::MatrixXd::Zero(2 * (N + 1), nz);
  m.Sx.leftCols(2 * (N + 1)).setIdentity();
  m.Su = Eigen::MatrixXd::Zero(2 * N, nz);
  m.Su.rightCols(2 * N).setIdentity();
  return m;
}

Eigen::VectorXd straight_line_z(const PlanProblem &p) {
  const std::size_t N = p.steps;
  Eigen::VectorXd z(static_cast<Eigen::Index>(4 * N + 2));
  for (std::size_t k = 0; k <= N; ++k)
    for (std::size_t c = 0; c < 2; ++c)
      z(static_cast<Eigen::Index>(2 * k + c)) =
          p.start[c] + (p.goal[c] - p.start[c]) * static_cast<double>(k) / static_cast<double>(N);
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t c = 0; c < 2; ++c)
      z(static_cast<Eigen::Index>(2 * (N + 1) + 2 * k + c)) =
          (p.goal[c] - p.start[c]) / (static_cast<double>(N) * p.dt);
  return z;
}

PlanResult report(const PlanProblem &p, const PlanMatrices &m, const Eigen::VectorXd &z) {
  PlanResult r;
  const std::size_t N = p.steps;
  for (std::size_t k = 0; k <= N; ++k)
    r.states.push_back({z(static_cast<Eigen::Index>(2 * k)),
                        z(static_cast<Eigen::Index>(2 * k + 1))});
  for (std::size_t k = 0; k < N; ++k)
    r.controls.push_back({z(static_cast<Eigen::Index>(2 * (N + 1) + 2 * k)),
                          z(static_cast<Eigen::Index>(2 * (N + 1) + 2 * k + 1))});
  std::vector<std::vector<double>> xs, us;
  for (const auto &s : r.states)
    xs.push_back({s[0], s[1]});
  for (const auto &u : r.controls)
    us.push_back({u[0], u[1]});
  r.rho_phi = robustness(Signal::from_states(xs, p.dt), p.phi)[0];
  r.rho_theta = robustness(Signal::from_states(us, p.dt), p.control_constraint())[0];
  r.residual = (m.E * z - m.D).norm();
  r.residual_raw = r.residual;
  return r;
}

} // namespace

Formula PlanProblem::control_constraint() const {
  return Formula::always(Formula::predicate(
      {mu::Norm{{0, 1}, {0.0, 0.0}}, Comparison::LessEq, {u_max, {}}}));
}

void PlanProblem::validate() const {
  if (steps == 0)
    throw InvalidArgument("planning horizon must be at least one step");
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw InvalidArgument("planning dt must be positive");
  if (!(u_max > 0.0))
    throw InvalidArgument("u_max must be positive");
  if (gamma1 < 0.0 || gamma2 < 0.0)
    throw InvalidArgument("penalty weights must be nonnegative");
  if (phi.required_dim() > 2)
    throw InvalidArgument("plan constraint refers to more than two state coordinates");
}

PlanResult straight_line(const PlanProblem &p) {
  p.validate();
  const PlanMatrices m = plan_matrices(p);
  return report(p, m, straight_line_z(p));
}

PlanResult plan(const PlanProblem &p, const PlanOptions &opt) {
  p.validate();
  const PlanMatrices m = plan_matrices(p);
  const std::size_t N = p.steps;
  const Formula theta = p.control_constraint();
  const MarginLoss jm{p.margin};
  const SignalLayout layout{0.0, p.dt, {}};
  const Eigen::VectorXd zero_x = Eigen::VectorXd::Zero(m.Sx.rows());
  const Eigen::VectorXd zero_u = Eigen::VectorXd::Zero(m.Su.rows());

  auto objective = [&](ad::Tape &, const Var &z, double w) {
    EvalConfig cfg = opt.cfg;
    if (cfg.mode != Approximation::Exact)
      cfg.w = w;
    Var r = affine_map(z, m.E, -m.D, {static_cast<std::size_t>(m.E.rows())});
    Var X = affine_map(z, m.Sx, zero_x, {1, N + 1, 2});
    Var U = affine_map(z, m.Su, zero_u, {1, N, 2});
    Var loss = ad::dot(r, r);
    loss = ad::add(loss, ad::scale(jm(robustness(X, layout, p.phi, cfg)), p.gamma1));
    loss = ad::add(loss, ad::scale(jm(robustness(U, layout, theta, cfg)), p.gamma2));
    return loss;
  };

  const Eigen::VectorXd z0 = straight_line_z(p);
  DescentOptions dopt;
  dopt.step = opt.step;
  dopt.max_iters = opt.max_iters;
  dopt.anneal = opt.cfg.mode == Approximation::Exact ? AnnealSchedule::constant(1.0)
                                                      : opt.anneal;
  dopt.tol = opt.tol;
  const DescentResult d = gradient_descent(
      objective, Tensor({z0.size() > 0 ? static_cast<std::size_t>(z0.size()) : 0},
                        std::vector<double>(z0.data(), z0.data() + z0.size())),
      dopt);

  Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(
      d.x.data().data(), static_cast<Eigen::Index>(d.x.size()));
  const double raw = (m.E * z - m.D).norm();
  if (opt.project) {
    const Eigen::VectorXd resid = m.E * z - m.D;
    const Eigen::MatrixXd EEt = m.E * m.E.transpose();
    z -= m.E.transpose() * EEt.ldlt().solve(resid);
  }
  PlanResult r = report(p, m, z);
  r.residual_raw = raw;
  r.loss = d.loss;
  r.iterations = d.iterations;
  r.history = d.history;
  return r;
}

double smoothness(const std::vector<Point2> &states) {
  double total = 0.0;
  for (std::size_t k = 1; k + 1 < states.size(); ++k)
    for (std::size_t c = 0; c < 2; ++c) {
      const double d2 = states[k + 1][c] - 2.0 * states[k][c] + states[k - 1][c];
      total += d2 * d2;
    }
  return total;
}

// ---------------------------------------------------------------------------
// Regularised fitting

std::vector<double> LinearModel::features(double t) const {
  if (size == 0)
    throw InvalidArgument("model needs at least one basis function");
  if (!(t_hi > t_lo))
    throw InvalidArgument("model domain must have t_hi > t_lo");
  std::vector<double> phi(size, 0.0);
  const double u = 2.0 * (t - t_lo) / (t_hi - t_lo) - 1.0;
  if (basis == Basis::Chebyshev) {
    phi[0] = 1.0;
    if (size > 1)
      phi[1] = u;
    for (std::size_t k = 2; k < size; ++k)
      phi[k] = 2.0 * u * phi[k - 1] - phi[k - 2];
    return phi;
  }
  if (size == 1) {
    phi[0] = 1.0;
    return phi;
  }
  const double h = 2.0 / static_cast<double>(size - 1);
  for (std::size_t k = 0; k < size; ++k) {
    const double knot = -1.0 + h * static_cast<double>(k);
    phi[k] = std::max(0.0, 1.0 - std::abs(u - knot) / h);
  }
  return phi;
}

double LinearModel::operator()(std::span<const double> theta, double t) const {
  const auto phi = features(t);
  if (theta.size() != phi.size())
    throw InvalidArgument("parameter count does not match the model size");
  double y = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k)
    y += theta[k] * phi[k];
  return y;
}

namespace {

Eigen::MatrixXd design_matrix(const LinearModel &m, std::span<const double> times) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(times.size()),
                    static_cast<Eigen::Index>(m.size));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto phi = m.features(times[i]);
    for (std::size_t k = 0; k < m.size; ++k)
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = phi[k];
  }
  return A;
}

void check_samples(std::span<const double> times, std::span<const double> values,
                   std::size_t model_size) {
  if (times.size() != values.size())
    throw InvalidArgument("times and values differ in length");
  if (times.size() < model_size)
    throw InvalidArgument("fewer samples than model parameters");
}

} // namespace

std::vector<double> least_squares_fit(const LinearModel &m, std::span<const double> times,
                                      std::span<const double> values) {
  check_samples(times, values, m.size);
  const Eigen::MatrixXd A = design_matrix(m, times);
  const Eigen::Map<const Eigen::VectorXd> y(values.data(),
                                            static_cast<Eigen::Index>(values.size()));
  const Eigen::VectorXd theta = A.colPivHouseholderQr().solve(y);
  return {theta.data(), theta.data() + theta.size()};
}

RegFitResult regularized_fit(const RegFitProblem &p, const RegFitOptions &opt) {
  check_samples(p.times, p.values, p.model.size);
  if (p.times.size() < 2)
    throw InvalidArgument("regularised fit needs at least two samples");
  if (!(p.gamma >= 0.0))
    throw InvalidArgument("gamma must be nonnegative");
  const std::size_t T = p.times.size(), K = p.model.size;
  const double dt = p.times[1] - p.times[0];
  const double Td = static_cast<double>(T);

  // A = Q R; in beta = R theta / sqrt(T) the MSE has Hessian 2 I.
  const Eigen::MatrixXd A = design_matrix(p.model, p.times);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
  const Eigen::MatrixXd R = qr.matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Qs = Q * std::sqrt(Td);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(p.values.data(),
                                                              static_cast<Eigen::Index>(T));
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(T));
  const SignalLayout layout{p.times.front(), dt, {}};
  const double norm = 1.0 / (1.0 + p.gamma);
  const MarginLoss hinge{};

  auto objective = [&](ad::Tape &, const Var &beta, double w) {
    Var out = affine_map(beta, Qs, -y, {T});
    Var loss = ad::scale(ad::dot(out, out), norm / Td);
    if (p.gamma > 0.0) {
      EvalConfig cfg = opt.cfg;
      if (cfg.mode != Approximation::Exact)
        cfg.w = w;
      Var s = affine_map(beta, Qs, zero, {1, T, 1});
      loss = ad::add(loss, ad::scale(hinge(robustness(s, layout, p.phi, cfg)), norm * p.gamma));
    }
    return loss;
  };

  DescentOptions dopt;
  dopt.step = opt.step;
  dopt.max_iters = opt.max_iters;
  dopt.anneal = opt.cfg.mode == Approximation::Exact ? AnnealSchedule::constant(1.0)
                                                     : opt.anneal;
  const DescentResult d = gradient_descent(objective, Tensor({K}, 0.0), dopt);

  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(
      d.x.data().data(), static_cast<Eigen::Index>(K));
  const Eigen::VectorXd theta =
      R.triangularView<Eigen::Upper>().solve(beta * std::sqrt(Td));
  RegFitResult r;
  r.theta.assign(theta.data(), theta.data() + theta.size());
  const Eigen::VectorXd out = A * theta;
  r.output.assign(out.data(), out.data() + out.size());
  r.mse = (out - y).squaredNorm() / Td;
  r.rho = robustness(Signal::scalar(r.output, dt, p.times.front()), p.phi)[0];
  r.iterations = d.iterations;
  return r;
}

RegFitProblem bump_problem(const BumpOptions &opt) {
  if (opt.samples < 2)
    throw InvalidArgument("bump data needs at least two samples");
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, opt.noise);
  RegFitProblem p;
  const double dt = opt.t_end / static_cast<double>(opt.samples - 1);
  for (std::size_t i = 0; i < opt.samples; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double left = 0.3 * std::exp(-std::pow((t - 0.3) / 0.3, 2));
    const double right = -0.25 * std::exp(-std::pow((t - 4.2) / 0.35, 2));
    p.times.push_back(t);
    p.values.push_back(0.5 + left + right + noise(rng));
  }
  p.model = {Basis::PiecewiseLinear, 41, 0.0, opt.t_end};
  const Formula s_gt = Formula::predicate({mu::Coordinate{0}, Comparison::Greater, {0.48, {}}});
  const Formula s_lt = Formula::predicate({mu::Coordinate{0}, Comparison::Less, {0.52, {}}});
  p.phi = Formula::always(Formula::conjunction(s_gt, s_lt), {1.0, 3.0});
  return p;
}

} // namespace stlgrad
