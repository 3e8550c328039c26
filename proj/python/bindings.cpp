// Python bindings: formulas, robustness, gradients and the fitting/planning
// drivers. Signals are numpy arrays of shape (T,), (T, n) or (B, T, n).

#include "stlgrad/core.hpp"
#include "stlgrad/io.hpp"
#include "stlgrad/optim.hpp"
#include "stlgrad/parser.hpp"
#include "stlgrad/semantics.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace stlgrad;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

struct PySignal {
  Signal signal;
  py::ssize_t ndim;
};

PySignal to_signal(const Array &a, double dt, double t0) {
  const auto nd = a.ndim();
  if (nd < 1 || nd > 3)
    throw InvalidArgument("signal must have shape (T,), (T, n) or (B, T, n)");
  const std::size_t b = nd == 3 ? a.shape(0) : 1;
  const std::size_t t = nd == 3 ? a.shape(1) : a.shape(0);
  const std::size_t n = nd == 1 ? 1 : a.shape(nd - 1);
  std::vector<double> values(a.data(), a.data() + a.size());
  return {Signal(b, t, n, std::move(values), t0, dt), nd};
}

EvalConfig eval_config(const std::string &mode, double w, const std::string &padding,
                       double rho_max) {
  EvalConfig cfg;
  cfg.mode = parse_mode(mode);
  cfg.w = w;
  cfg.padding = parse_padding(padding);
  cfg.rho_max = rho_max;
  cfg.validate();
  return cfg;
}

ParamValues param_values(const std::map<std::string, py::object> &params) {
  ParamValues out;
  for (const auto &[name, v] : params) {
    if (py::isinstance<py::float_>(v) || py::isinstance<py::int_>(v))
      out[name] = {v.cast<double>()};
    else
      out[name] = v.cast<std::vector<double>>();
  }
  return out;
}

py::object values_or_scalar(const std::vector<double> &v) {
  if (v.size() == 1)
    return py::float_(v[0]);
  return py::cast(v);
}

py::array_t<double> array_of(const std::vector<double> &v, std::vector<py::ssize_t> shape) {
  py::array_t<double> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> points(const std::vector<Point2> &pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(i, 0) = pts[i][0];
    m(i, 1) = pts[i][1];
  }
  return out;
}

std::vector<std::size_t> axes_or_default(std::optional<std::vector<std::size_t>> axes,
                                         std::size_t n) {
  if (axes)
    return *axes;
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = k;
  return out;
}

std::map<std::string, Monotonicity, std::less<>>
monotone_of(const std::map<std::string, std::string> &m) {
  std::map<std::string, Monotonicity, std::less<>> out;
  for (const auto &[name, s] : m) {
    if (s == "increasing")
      out[name] = Monotonicity::Increasing;
    else if (s == "decreasing")
      out[name] = Monotonicity::Decreasing;
    else
      throw InvalidArgument("monotonicity must be 'increasing' or 'decreasing', got '" + s +
                            "'");
  }
  return out;
}

py::dict fit_dict(const PstlFit &fit, const char *method) {
  py::dict params;
  for (const auto &[name, v] : fit.params)
    params[py::str(name)] = array_of(v, {static_cast<py::ssize_t>(v.size())});
  py::dict d;
  d["method"] = method;
  d["parameters"] = params;
  d["robustness"] = array_of(fit.robustness, {static_cast<py::ssize_t>(fit.robustness.size())});
  d["iterations"] = fit.iterations;
  d["converged"] = fit.converged;
  d["wall_time_s"] = fit.seconds;
  return d;
}

py::dict plan_dict(const PlanResult &r) {
  py::dict d;
  d["states"] = points(r.states);
  d["controls"] = points(r.controls);
  d["rho_phi"] = r.rho_phi;
  d["rho_theta"] = r.rho_theta;
  d["satisfied"] = r.satisfied();
  d["dynamics_residual"] = r.residual;
  d["dynamics_residual_before_projection"] = r.residual_raw;
  d["loss"] = r.loss;
  d["iterations"] = r.iterations;
  d["smoothness"] = smoothness(r.states);
  return d;
}

} // namespace

PYBIND11_MODULE(_stlgrad, m) {
  m.doc() = "Differentiable signal temporal logic";

  static py::exception<Error> base(m, "StlgradError");
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", base.ptr());
  static py::exception<EvalError> eval_error(m, "EvalError", base.ptr());
  static py::exception<OptimError> optim_error(m, "OptimError", base.ptr());
  static py::exception<IoError> io_error(m, "IoError", base.ptr());
  static py::exception<ParseError> parse_error(m, "ParseError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p)
        std::rethrow_exception(p);
    } catch (const ParseError &e) {
      py::object err = py::reinterpret_borrow<py::object>(parse_error.ptr())(e.what());
      err.attr("start") = e.span().start;
      err.attr("end") = e.span().end;
      err.attr("expected") = e.expected();
      PyErr_SetObject(parse_error.ptr(), err.ptr());
    } catch (const InvalidArgument &e) {
      invalid(e.what());
    } catch (const EvalError &e) {
      eval_error(e.what());
    } catch (const OptimError &e) {
      optim_error(e.what());
    } catch (const IoError &e) {
      io_error(e.what());
    } catch (const Error &e) {
      base(e.what());
    }
  });

  py::class_<Region>(m, "Region")
      .def_static(
          "box",
          [](std::vector<double> lo, std::vector<double> hi,
             std::optional<std::vector<std::size_t>> axes) {
            const std::size_t n = lo.size();
            return Region::box(axes_or_default(std::move(axes), n), std::move(lo),
                               std::move(hi));
          },
          py::arg("lo"), py::arg("hi"), py::arg("axes") = py::none())
      .def_static(
          "ball",
          [](std::vector<double> center, double radius,
             std::optional<std::vector<std::size_t>> axes) {
            const std::size_t n = center.size();
            return Region::ball(axes_or_default(std::move(axes), n), std::move(center), radius);
          },
          py::arg("center"), py::arg("radius"), py::arg("axes") = py::none())
      .def_static("from_json", [](const std::string &text) { return parse_region(text); })
      .def_property_readonly("kind",
                             [](const Region &r) {
                               return r.kind == Region::Kind::Box ? "box" : "ball";
                             })
      .def_readonly("axes", &Region::indices)
      .def_readonly("lo", &Region::lo)
      .def_readonly("hi", &Region::hi)
      .def_readonly("center", &Region::center)
      .def_readonly("radius", &Region::radius);

  py::class_<Formula>(m, "Formula")
      .def_property_readonly("op", [](const Formula &f) { return std::string(op_name(f.op())); })
      .def_property_readonly("children",
                             [](const Formula &f) {
                               std::vector<Formula> out;
                               for (std::size_t i = 0; i < f.arity(); ++i)
                                 out.push_back(f.child(i));
                               return out;
                             })
      .def_property_readonly("interval",
                             [](const Formula &f) -> py::object {
                               if (!op_has_interval(f.op()))
                                 return py::none();
                               const Interval &iv = f.interval();
                               return py::make_tuple(iv.lower(), iv.upper());
                             })
      .def_property_readonly("parameters", &Formula::parameters)
      .def_property_readonly("required_dim", &Formula::required_dim)
      .def_property_readonly("size", &Formula::size)
      .def_property_readonly("depth", &Formula::depth)
      .def("to_dot", [](const Formula &f) { return to_dot(f); })
      .def("__str__", [](const Formula &f) { return unparse(f); })
      .def("__repr__", [](const Formula &f) { return "Formula('" + unparse(f) + "')"; })
      .def("__eq__", [](const Formula &a, const Formula &b) { return a == b; })
      .def("__hash__", [](const Formula &f) { return py::hash(py::str(unparse(f))); });

  m.def(
      "parse",
      [](const std::string &text, std::optional<std::size_t> dim,
         std::map<std::string, std::size_t> aliases, std::map<std::string, Region> regions,
         std::map<std::string, double> parameters) {
        ParserConfig pc;
        pc.dim = dim;
        pc.aliases.insert(aliases.begin(), aliases.end());
        pc.regions.insert(regions.begin(), regions.end());
        pc.parameters.insert(parameters.begin(), parameters.end());
        return parse(text, pc);
      },
      py::arg("text"), py::arg("dim") = py::none(),
      py::arg("aliases") = std::map<std::string, std::size_t>{},
      py::arg("regions") = std::map<std::string, Region>{},
      py::arg("parameters") = std::map<std::string, double>{},
      "Parse a formula. Coordinates are x0, x1, ...; aliases map extra names to coordinates.");

  m.def("to_dot", [](const Formula &f) { return to_dot(f); }, py::arg("formula"));

  m.def(
      "trace",
      [](const Formula &f, const Array &signal, double dt, double t0, const std::string &mode,
         double w, const std::string &padding, double rho_max,
         const std::map<std::string, py::object> &params) {
        const PySignal s = to_signal(signal, dt, t0);
        const EvalConfig cfg = eval_config(mode, w, padding, rho_max);
        const ParamValues pv = param_values(params);
        RobustnessTrace tr;
        {
          py::gil_scoped_release release;
          tr = robustness_trace(s.signal, f, cfg, pv);
        }
        if (s.ndim < 3)
          return array_of(tr.values, {static_cast<py::ssize_t>(tr.time)});
        return array_of(tr.values, {static_cast<py::ssize_t>(tr.batch),
                                    static_cast<py::ssize_t>(tr.time)});
      },
      py::arg("formula"), py::arg("signal"), py::arg("dt") = 1.0, py::arg("t0") = 0.0,
      py::arg("mode") = "exact", py::arg("w") = 1.0, py::arg("padding") = "last",
      py::arg("rho_max") = 1e6, py::arg("params") = std::map<std::string, py::object>{},
      "Robustness at every time step.");

  m.def(
      "robustness",
      [](const Formula &f, const Array &signal, double dt, double t0, const std::string &mode,
         double w, const std::string &padding, double rho_max,
         const std::map<std::string, py::object> &params) -> py::object {
        const PySignal s = to_signal(signal, dt, t0);
        const EvalConfig cfg = eval_config(mode, w, padding, rho_max);
        const ParamValues pv = param_values(params);
        std::vector<double> rho;
        {
          py::gil_scoped_release release;
          rho = robustness(s.signal, f, cfg, pv);
        }
        if (s.ndim < 3)
          return py::float_(rho[0]);
        return array_of(rho, {static_cast<py::ssize_t>(rho.size())});
      },
      py::arg("formula"), py::arg("signal"), py::arg("dt") = 1.0, py::arg("t0") = 0.0,
      py::arg("mode") = "exact", py::arg("w") = 1.0, py::arg("padding") = "last",
      py::arg("rho_max") = 1e6, py::arg("params") = std::map<std::string, py::object>{},
      "Robustness at the first time step.");

  m.def(
      "gradient",
      [](const Formula &f, const Array &signal, double dt, double t0, const std::string &mode,
         double w, const std::string &padding, double rho_max,
         const std::map<std::string, py::object> &params) {
        const PySignal s = to_signal(signal, dt, t0);
        const EvalConfig cfg = eval_config(mode, w, padding, rho_max);
        const ParamValues pv = param_values(params);
        RobustnessGradient g;
        {
          py::gil_scoped_release release;
          g = robustness_gradient(s.signal, f, cfg, pv);
        }
        std::vector<py::ssize_t> shape(signal.shape(), signal.shape() + signal.ndim());
        py::dict dparams;
        for (const auto &[name, v] : g.params)
          dparams[py::str(name)] = values_or_scalar(v);
        py::object rho = s.ndim < 3 ? py::object(py::float_(g.robustness[0]))
                                    : py::object(array_of(g.robustness,
                                                          {static_cast<py::ssize_t>(
                                                              g.robustness.size())}));
        return py::make_tuple(rho, array_of(g.signal, shape), dparams);
      },
      py::arg("formula"), py::arg("signal"), py::arg("dt") = 1.0, py::arg("t0") = 0.0,
      py::arg("mode") = "exact", py::arg("w") = 1.0, py::arg("padding") = "last",
      py::arg("rho_max") = 1e6, py::arg("params") = std::map<std::string, py::object>{},
      "Returns (robustness, d robustness / d signal, {parameter: d robustness / d parameter}).");

  m.def(
      "satisfies",
      [](const Formula &f, const Array &signal, double dt, double t0,
         const std::map<std::string, py::object> &params) {
        const PySignal s = to_signal(signal, dt, t0);
        const ParamValues pv = param_values(params);
        std::vector<bool> out(s.signal.batch());
        for (std::size_t b = 0; b < out.size(); ++b)
          out[b] = satisfies(s.signal, f, b, {}, pv);
        return s.ndim < 3 ? py::object(py::bool_(out[0])) : py::cast(out);
      },
      py::arg("formula"), py::arg("signal"), py::arg("dt") = 1.0, py::arg("t0") = 0.0,
      py::arg("params") = std::map<std::string, py::object>{},
      "Boolean satisfaction at the first time step.");

  m.def(
      "step_responses",
      [](std::size_t count, std::size_t samples, double dt, std::uint64_t seed,
         std::pair<double, double> omega, std::pair<double, double> zeta) {
        StepResponseOptions so;
        so.count = count;
        so.samples = samples;
        so.dt = dt;
        so.seed = seed;
        std::tie(so.omega_lo, so.omega_hi) = omega;
        std::tie(so.zeta_lo, so.zeta_hi) = zeta;
        const Signal s = step_responses(so);
        const auto v = s.values();
        return array_of({v.begin(), v.end()},
                        {static_cast<py::ssize_t>(s.batch()), static_cast<py::ssize_t>(s.time()),
                         static_cast<py::ssize_t>(s.dim())});
      },
      py::arg("count") = 100, py::arg("samples") = 100, py::arg("dt") = 1.0,
      py::arg("seed") = 0, py::arg("omega") = std::pair{0.5, 2.0},
      py::arg("zeta") = std::pair{0.2, 1.5},
      "Unit step responses of random second-order systems, shape (count, samples, 1).");

  m.def(
      "fit_pstl",
      [](const Formula &templ, const Array &signals, double dt,
         const std::map<std::string, std::string> &monotone, double step, std::size_t iters,
         double tol, const std::string &mode, double w) {
        PstlProblem p;
        p.templ = templ;
        p.data = to_signal(signals, dt, 0.0).signal;
        p.monotone = monotone_of(monotone);
        PstlOptions opt;
        opt.step = step;
        opt.max_iters = iters;
        opt.tol = tol;
        opt.cfg.mode = parse_mode(mode);
        opt.cfg.w = w;
        opt.cfg.validate();
        PstlFit fit;
        {
          py::gil_scoped_release release;
          fit = fit_pstl(p, opt);
        }
        return fit_dict(fit, "gradient");
      },
      py::arg("template"), py::arg("signals"), py::arg("dt") = 1.0,
      py::arg("monotone") = std::map<std::string, std::string>{}, py::arg("step") = 5e-4,
      py::arg("iters") = 200000, py::arg("tol") = 1e-6, py::arg("mode") = "exact",
      py::arg("w") = 1.0,
      "Tightest parameter values that make the template hold on every signal, by gradient steps.");

  m.def(
      "bisect_fit",
      [](const Formula &templ, const Array &signals, double dt,
         const std::map<std::string, std::string> &monotone, double tol) {
        PstlProblem p;
        p.templ = templ;
        p.data = to_signal(signals, dt, 0.0).signal;
        p.monotone = monotone_of(monotone);
        BisectOptions opt;
        opt.tol = tol;
        PstlFit fit;
        {
          py::gil_scoped_release release;
          fit = fit_pstl_bisect(p, opt);
        }
        return fit_dict(fit, "bisection");
      },
      py::arg("template"), py::arg("signals"), py::arg("dt") = 1.0,
      py::arg("monotone") = std::map<std::string, std::string>{}, py::arg("tol") = 1e-9,
      "Same fit as fit_pstl, by bisection on each parameter.");

  m.def(
      "fit_problem",
      [](const std::string &text, const std::string &base_dir, const std::string &method,
         std::optional<std::uint64_t> seed) {
        if (method != "gradient" && method != "bisection")
          throw InvalidArgument("method must be 'gradient' or 'bisection'");
        const PstlSpec spec = parse_pstl_spec(text, base_dir, seed);
        PstlFit fit;
        {
          py::gil_scoped_release release;
          fit = method == "gradient" ? fit_pstl(spec.problem, spec.options)
                                     : fit_pstl_bisect(spec.problem, spec.bisect);
        }
        return fit_dict(fit, method == "gradient" ? "gradient" : "bisection");
      },
      py::arg("text"), py::arg("base_dir") = ".", py::arg("method") = "gradient",
      py::arg("seed") = py::none(), "Run a fit problem given as JSON text.");

  m.def(
      "plan_problem",
      [](const std::string &text, std::optional<double> step, std::optional<std::size_t> iters,
         std::optional<bool> project) {
        PlanSpec spec = parse_plan_spec(text);
        if (step)
          spec.options.step = *step;
        if (iters)
          spec.options.max_iters = *iters;
        if (project)
          spec.options.project = *project;
        PlanResult r;
        {
          py::gil_scoped_release release;
          r = plan(spec.problem, spec.options);
        }
        return plan_dict(r);
      },
      py::arg("text"), py::arg("step") = py::none(), py::arg("iters") = py::none(),
      py::arg("project") = py::none(), "Solve a planning problem given as JSON text.");

  m.def(
      "regfit",
      [](std::vector<double> times, std::vector<double> values, const Formula &f,
         const std::string &basis, std::size_t size, double gamma, double step,
         std::size_t iters) {
        if (times.size() != values.size() || times.empty())
          throw InvalidArgument("times and values must be non-empty and of equal length");
        RegFitProblem p;
        p.model.basis = basis == "pwl"    ? Basis::PiecewiseLinear
                        : basis == "cheb" ? Basis::Chebyshev
                                          : throw InvalidArgument("basis must be 'pwl' or 'cheb'");
        p.model.size = size;
        p.model.t_lo = times.front();
        p.model.t_hi = times.back();
        p.times = std::move(times);
        p.values = std::move(values);
        p.phi = f;
        p.gamma = gamma;
        RegFitOptions opt;
        opt.step = step;
        opt.max_iters = iters;
        RegFitResult r;
        {
          py::gil_scoped_release release;
          r = regularized_fit(p, opt);
        }
        py::dict d;
        d["theta"] = r.theta;
        d["output"] = array_of(r.output, {static_cast<py::ssize_t>(r.output.size())});
        d["mse"] = r.mse;
        d["robustness"] = r.rho;
        d["iterations"] = r.iterations;
        return d;
      },
      py::arg("times"), py::arg("values"), py::arg("formula"), py::arg("basis") = "cheb",
      py::arg("size") = 8, py::arg("gamma") = 10.0, py::arg("step") = 0.01,
      py::arg("iters") = 3000,
      "Least-squares fit of a linear model penalized by gamma * max(0, -robustness).");
}
