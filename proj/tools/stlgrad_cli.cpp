// Command-line front end.
//
// Exit codes: 0 success or satisfied, 1 error, 2 checked and violated.

#include "stlgrad/io.hpp"
#include "stlgrad/optim.hpp"
#include "stlgrad/parser.hpp"
#include "stlgrad/semantics.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

using namespace stlgrad;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kViolated = 2;

struct EvalArgs {
  std::string formula;
  std::string formula_file;
  std::string signal;
  std::string config;
  std::string mode;
  std::optional<double> w;
  std::string padding;
  std::optional<double> rho_max;
  std::vector<std::string> params;
};

void add_eval_flags(CLI::App *app, EvalArgs &a) {
  auto *f = app->add_option("-f,--formula", a.formula, "Formula text");
  auto *ff = app->add_option("--formula-file", a.formula_file, "File holding the formula");
  f->excludes(ff);
  app->add_option("-s,--signal", a.signal, "Signal file (.csv or .json)")->required();
  app->add_option("--config", a.config, "Evaluation config JSON file");
  app->add_option("--mode", a.mode, "exact | soft | logsumexp");
  app->add_option("--w", a.w, "Smoothing scale");
  app->add_option("--padding", a.padding, "last | const:R");
  app->add_option("--rho-max", a.rho_max, "Robustness cap for unbounded operators");
  app->add_option("-p,--param", a.params, "Threshold parameter value, NAME=VALUE");
}

std::string formula_text(const EvalArgs &a) {
  if (!a.formula_file.empty())
    return read_file(a.formula_file);
  if (a.formula.empty())
    throw IoError("a formula is required (-f or --formula-file)");
  return a.formula;
}

EvalConfig eval_config(const EvalArgs &a) {
  EvalConfig cfg = a.config.empty() ? EvalConfig{} : parse_eval_config(read_file(a.config));
  if (!a.mode.empty())
    cfg.mode = parse_mode(a.mode);
  if (a.w)
    cfg.w = *a.w;
  if (!a.padding.empty())
    cfg.padding = parse_padding(a.padding);
  if (a.rho_max)
    cfg.rho_max = *a.rho_max;
  cfg.validate();
  return cfg;
}

ParserConfig parser_config(const std::vector<std::string> &names, std::size_t dim) {
  static const std::regex coordinate("x[0-9]+");
  ParserConfig pc;
  pc.dim = dim;
  for (std::size_t k = 0; k < names.size(); ++k)
    if (!std::regex_match(names[k], coordinate))
      pc.aliases.emplace(names[k], k);
  return pc;
}

ParamValues param_values(const std::vector<std::string> &items) {
  ParamValues out;
  for (const auto &item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw IoError("parameter '" + item + "' must look like NAME=VALUE");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1)
        throw std::invalid_argument(item);
    } catch (const std::logic_error &) {
      throw IoError("parameter '" + item + "' has a malformed value");
    }
    out[item.substr(0, eq)] = {v};
  }
  return out;
}

struct Evaluation {
  SignalFile data;
  Formula formula = Formula::truth();
  EvalConfig cfg;
  ParamValues params;
};

Evaluation load_evaluation(const EvalArgs &a) {
  SignalFile data = read_signal(a.signal);
  Formula f = parse(formula_text(a), parser_config(data.names, data.signal.dim()));
  return {std::move(data), std::move(f), eval_config(a), param_values(a.params)};
}

// Writes to `path`, or stdout when it is empty or "-".
template <class Fn> void emit(const std::string &path, Fn &&fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os)
    throw IoError("cannot write '" + path + "'");
  fn(os);
  if (!os)
    throw IoError("failed writing '" + path + "'");
}

int cmd_eval(const EvalArgs &a) {
  const Evaluation e = load_evaluation(a);
  for (double r : robustness(e.data.signal, e.formula, e.cfg, e.params))
    std::cout << format_real(r) << "\n";
  return kOk;
}

int cmd_trace(const EvalArgs &a, const std::string &out, const std::string &format) {
  const Evaluation e = load_evaluation(a);
  const RobustnessTrace tr = robustness_trace(e.data.signal, e.formula, e.cfg, e.params);
  emit(out, [&](std::ostream &os) {
    if (format == "json")
      os << trace_json(tr) << "\n";
    else
      write_trace_csv(os, tr);
  });
  return kOk;
}

int cmd_check(const EvalArgs &a, bool quiet) {
  const Evaluation e = load_evaluation(a);
  bool all = true;
  for (std::size_t b = 0; b < e.data.signal.batch(); ++b) {
    const bool ok = satisfies(e.data.signal, e.formula, b, e.cfg, e.params);
    all = all && ok;
    if (!quiet)
      std::cout << (ok ? "satisfied" : "violated") << "\n";
  }
  return all ? kOk : kViolated;
}

struct FitArgs {
  std::string problem;
  std::string formula;
  std::string signal;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> step;
  std::optional<std::size_t> iters;
  std::optional<double> tol;
  std::string mode;
};

void add_fit_flags(CLI::App *app, FitArgs &a) {
  app->add_option("problem", a.problem, "Fit problem JSON");
  app->add_option("-f,--template", a.formula, "Template formula (instead of a problem file)");
  app->add_option("-s,--signal", a.signal, "Signal file (with --template)");
  app->add_option("-o,--output", a.out, "Report path (default stdout)");
  app->add_option("--seed", a.seed, "Seed for generated signals");
  app->add_option("--step", a.step, "Gradient step size");
  app->add_option("--iters", a.iters, "Iteration limit");
  app->add_option("--tol", a.tol, "Stopping tolerance");
  app->add_option("--mode", a.mode, "Robustness mode inside the loss");
}

PstlSpec load_fit(const FitArgs &a) {
  PstlSpec spec;
  if (!a.problem.empty()) {
    if (!a.formula.empty() || !a.signal.empty())
      throw IoError("give either a problem file or --template with --signal");
    const std::string base = std::filesystem::path(a.problem).parent_path().string();
    spec = parse_pstl_spec(read_file(a.problem), base.empty() ? "." : base, a.seed);
  } else {
    if (a.formula.empty() || a.signal.empty())
      throw IoError("a problem file or both --template and --signal are required");
    const SignalFile f = read_signal(a.signal);
    spec.problem.data = f.signal;
    spec.problem.templ = parse(a.formula, parser_config(f.names, f.signal.dim()));
  }
  if (a.step)
    spec.options.step = *a.step;
  if (a.iters)
    spec.options.max_iters = *a.iters;
  if (a.tol) {
    spec.options.tol = *a.tol;
    spec.bisect.tol = *a.tol;
  }
  if (!a.mode.empty())
    spec.options.cfg.mode = parse_mode(a.mode);
  return spec;
}

int cmd_fit(const FitArgs &a, bool bisect) {
  const PstlSpec spec = load_fit(a);
  const PstlFit fit = bisect ? fit_pstl_bisect(spec.problem, spec.bisect)
                             : fit_pstl(spec.problem, spec.options);
  emit(a.out, [&](std::ostream &os) {
    os << fit_report_json(fit, bisect ? "bisection" : "gradient") << "\n";
  });
  return kOk;
}

struct PlanArgs {
  std::string problem;
  std::string trajectory;
  std::string report;
  std::optional<double> step;
  std::optional<std::size_t> iters;
  std::string mode;
  bool no_project = false;
};

int cmd_plan(const PlanArgs &a) {
  PlanSpec spec = parse_plan_spec(read_file(a.problem));
  if (a.step)
    spec.options.step = *a.step;
  if (a.iters)
    spec.options.max_iters = *a.iters;
  if (!a.mode.empty())
    spec.options.cfg.mode = parse_mode(a.mode);
  if (a.no_project)
    spec.options.project = false;
  const PlanResult r = plan(spec.problem, spec.options);
  if (!a.trajectory.empty())
    emit(a.trajectory, [&](std::ostream &os) { write_trajectory_csv(os, r, spec.problem.dt); });
  emit(a.report, [&](std::ostream &os) { os << plan_report_json(r) << "\n"; });
  return r.satisfied() ? kOk : kViolated;
}

struct RegFitArgs {
  std::string data;
  std::string formula;
  std::string basis = "pwl";
  std::optional<std::size_t> size;
  double gamma = 10.0;
  std::optional<double> step;
  std::optional<std::size_t> iters;
  std::uint64_t seed = 0;
  std::size_t samples = 101;
  std::string out;
  std::string output_csv;
};

int cmd_regfit(const RegFitArgs &a) {
  RegFitProblem p = bump_problem({a.samples, 5.0, 0.03, a.seed});
  std::vector<std::string> names{"x0"};
  if (!a.data.empty()) {
    const SignalFile f = read_signal(a.data);
    if (f.signal.batch() != 1 || f.signal.dim() != 1)
      throw IoError("regfit data must hold one scalar signal");
    p.times.clear();
    p.values.clear();
    for (std::size_t i = 0; i < f.signal.length(0); ++i) {
      p.times.push_back(f.signal.time_of(i));
      p.values.push_back(f.signal.at(0, i, 0));
    }
    names = f.names;
  }
  if (p.times.size() < 2)
    throw IoError("regfit needs at least two samples");
  if (!a.formula.empty())
    p.phi = parse(a.formula, parser_config(names, 1));
  if (a.basis == "cheb" || a.basis == "chebyshev")
    p.model.basis = Basis::Chebyshev;
  else if (a.basis == "pwl" || a.basis == "piecewise-linear")
    p.model.basis = Basis::PiecewiseLinear;
  else
    throw IoError("unknown basis '" + a.basis + "'");
  if (a.size)
    p.model.size = *a.size;
  else if (p.model.basis == Basis::Chebyshev)
    p.model.size = 16;
  p.model.t_lo = p.times.front();
  p.model.t_hi = p.times.back();
  p.gamma = a.gamma;
  RegFitOptions opt;
  if (a.step)
    opt.step = *a.step;
  if (a.iters)
    opt.max_iters = *a.iters;
  const RegFitResult r = regularized_fit(p, opt);

  std::ostringstream theta;
  theta << "[";
  for (std::size_t k = 0; k < r.theta.size(); ++k)
    theta << (k ? ", " : "") << format_real(r.theta[k], 0);
  theta << "]";
  emit(a.out, [&](std::ostream &os) {
    os << "{\n  \"basis\": \"" << (p.model.basis == Basis::Chebyshev ? "chebyshev" : "piecewise-linear")
       << "\",\n  \"theta\": " << theta.str() << ",\n  \"gamma\": " << format_real(p.gamma, 0)
       << ",\n  \"mse\": " << format_real(r.mse) << ",\n  \"rho\": " << format_real(r.rho)
       << ",\n  \"satisfied\": " << (r.rho >= 0.0 ? "true" : "false")
       << ",\n  \"iterations\": " << r.iterations << "\n}\n";
  });
  if (!a.output_csv.empty())
    emit(a.output_csv, [&](std::ostream &os) {
      os << "t,data,fit\n";
      for (std::size_t i = 0; i < p.times.size(); ++i)
        os << format_real(p.times[i]) << "," << format_real(p.values[i]) << ","
           << format_real(r.output[i]) << "\n";
    });
  return kOk;
}

int cmd_graph(const std::string &formula, std::size_t dim, const std::string &out) {
  ParserConfig pc;
  if (dim > 0)
    pc.dim = dim;
  const Formula f = parse(formula, pc);
  emit(out, [&](std::ostream &os) { os << to_dot(f); });
  return kOk;
}

struct BenchArgs {
  std::string op = "always";
  std::string formula;
  std::vector<std::size_t> sizes{1000, 10000, 100000};
  std::size_t reps = 3;
  std::uint64_t seed = 0;
  std::string mode = "exact";
};

int cmd_bench(const BenchArgs &a) {
  std::string text = a.formula;
  if (text.empty()) {
    if (a.op == "always")
      text = "always x0 > 0";
    else if (a.op == "eventually")
      text = "eventually x0 > 0";
    else if (a.op == "until")
      text = "(x0 > -0.5) until (x0 > 0.9)";
    else
      throw IoError("unknown bench op '" + a.op + "'");
  }
  const Formula f = parse(text, 1);
  EvalConfig cfg;
  cfg.mode = parse_mode(a.mode);
  std::mt19937_64 rng(a.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::cout << "op,T,seconds\n";
  for (std::size_t T : a.sizes) {
    std::vector<double> v(T);
    for (double &x : v)
      x = u(rng);
    const Signal s = Signal::scalar(std::move(v));
    double best = kInfinity;
    for (std::size_t r = 0; r < std::max<std::size_t>(a.reps, 1); ++r) {
      const auto start = std::chrono::steady_clock::now();
      const auto rho = robustness(s, f, cfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!std::isfinite(rho[0]))
        throw EvalError("benchmark produced a non-finite robustness");
      best = std::min(best, secs);
    }
    std::cout << a.op << "," << T << "," << format_real(best) << "\n";
  }
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Differentiable signal temporal logic"};
  app.require_subcommand(1);
  app.fallthrough();

  EvalArgs eval_args, trace_args, check_args;
  std::string trace_out, trace_format = "csv";
  bool quiet = false;
  auto *eval = app.add_subcommand("eval", "Print the robustness of each batch element");
  add_eval_flags(eval, eval_args);
  auto *trace = app.add_subcommand("trace", "Write the full robustness trace");
  add_eval_flags(trace, trace_args);
  trace->add_option("-o,--output", trace_out, "Output path (default stdout)");
  trace->add_option("--format", trace_format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  auto *check = app.add_subcommand("check", "Boolean check; exit 2 when violated");
  add_eval_flags(check, check_args);
  check->add_flag("-q,--quiet", quiet, "No per-element output");

  FitArgs fit_args, bisect_args;
  auto *fit = app.add_subcommand("fit", "Gradient fit of a parametric template");
  add_fit_flags(fit, fit_args);
  auto *bisect = app.add_subcommand("bisect-fit", "Bisection fit of a monotone template");
  add_fit_flags(bisect, bisect_args);

  PlanArgs plan_args;
  auto *plan_cmd = app.add_subcommand("plan", "Plan a trajectory; exit 2 when unsatisfied");
  plan_cmd->add_option("problem", plan_args.problem, "Plan problem JSON")->required();
  plan_cmd->add_option("-t,--trajectory", plan_args.trajectory, "Trajectory CSV path");
  plan_cmd->add_option("-o,--report", plan_args.report, "Diagnostics JSON path (default stdout)");
  plan_cmd->add_option("--step", plan_args.step, "Gradient step size");
  plan_cmd->add_option("--iters", plan_args.iters, "Iteration limit");
  plan_cmd->add_option("--mode", plan_args.mode, "Robustness mode inside the loss");
  plan_cmd->add_flag("--no-project", plan_args.no_project, "Skip the projection onto the dynamics");

  RegFitArgs reg_args;
  auto *regfit = app.add_subcommand("regfit", "Robustness-regularised curve fit");
  regfit->add_option("-d,--data", reg_args.data, "Signal CSV (default: generated bump data)");
  regfit->add_option("-f,--formula", reg_args.formula, "Constraint formula");
  regfit->add_option("--basis", reg_args.basis, "pwl | cheb");
  regfit->add_option("--size", reg_args.size, "Number of basis functions");
  regfit->add_option("--gamma", reg_args.gamma, "Robustness penalty weight");
  regfit->add_option("--step", reg_args.step, "Gradient step size");
  regfit->add_option("--iters", reg_args.iters, "Iteration limit");
  regfit->add_option("--seed", reg_args.seed, "Noise seed for generated data");
  regfit->add_option("--samples", reg_args.samples, "Sample count for generated data");
  regfit->add_option("-o,--output", reg_args.out, "Parameter JSON path (default stdout)");
  regfit->add_option("--output-csv", reg_args.output_csv, "Fitted signal CSV path");

  std::string graph_formula, graph_out;
  std::size_t graph_dim = 0;
  auto *graph = app.add_subcommand("graph", "Export the formula tree as DOT");
  graph->add_option("-f,--formula", graph_formula, "Formula text")->required();
  graph->add_option("--dim", graph_dim, "State dimension to check against");
  graph->add_option("-o,--output", graph_out, "DOT path (default stdout)");

  BenchArgs bench_args;
  auto *bench = app.add_subcommand("bench", "Time evaluation over signal lengths");
  bench->add_option("--op", bench_args.op, "always | eventually | until");
  bench->add_option("-f,--formula", bench_args.formula, "Custom formula over x0");
  bench->add_option("--sizes", bench_args.sizes, "Signal lengths")->delimiter(',');
  bench->add_option("--reps", bench_args.reps, "Repetitions per size (fastest is kept)");
  bench->add_option("--seed", bench_args.seed, "Signal seed");
  bench->add_option("--mode", bench_args.mode, "exact | soft | logsumexp");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  try {
    if (eval->parsed())
      return cmd_eval(eval_args);
    if (trace->parsed())
      return cmd_trace(trace_args, trace_out, trace_format);
    if (check->parsed())
      return cmd_check(check_args, quiet);
    if (fit->parsed())
      return cmd_fit(fit_args, false);
    if (bisect->parsed())
      return cmd_fit(bisect_args, true);
    if (plan_cmd->parsed())
      return cmd_plan(plan_args);
    if (regfit->parsed())
      return cmd_regfit(reg_args);
    if (graph->parsed())
      return cmd_graph(graph_formula, graph_dim, graph_out);
    if (bench->parsed())
      return cmd_bench(bench_args);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
