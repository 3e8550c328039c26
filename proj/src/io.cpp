#include "stlgrad/io.hpp"

#include "stlgrad/parser.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace stlgrad {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t p = line.find(sep, start);
    out.push_back(trim(line.substr(start, p - start)));
    if (p == std::string_view::npos)
      break;
    start = p + 1;
  }
  return out;
}

double to_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw IoError("line " + std::to_string(line) + ": bad number '" +
                  std::string(s) + "'");
  return v;
}

struct Element {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
};

void check_dim(const std::string &where, std::size_t dim, std::size_t got) {
  if (got != dim)
    throw IoError(where + ": expected " + std::to_string(dim) + " values, got " +
                  std::to_string(got));
}

// Infers t0 and dt from the first element with two samples and checks every
// element against them.
Signal assemble(const std::vector<Element> &elements,
                std::optional<double> dt_hint) {
  if (elements.empty())
    throw IoError("no samples");
  const double t0 = elements.front().times.front();
  double dt = dt_hint.value_or(0.0);
  if (!dt_hint) {
    for (const auto &e : elements)
      if (e.times.size() > 1) {
        dt = e.times[1] - e.times[0];
        break;
      }
    if (dt == 0.0)
      dt = 1.0;
  }
  if (!(dt > 0.0))
    throw IoError("sample times must increase");
  const double tol = 1e-6 * dt;
  std::vector<Signal> parts;
  for (std::size_t b = 0; b < elements.size(); ++b) {
    const auto &e = elements[b];
    for (std::size_t i = 0; i < e.times.size(); ++i) {
      const double expected = t0 + static_cast<double>(i) * dt;
      if (std::abs(e.times[i] - expected) > tol)
        throw IoError("element " + std::to_string(b) + " sample " + std::to_string(i) +
                      ": time " + format_real(e.times[i]) + " breaks the uniform grid (t0=" +
                      format_real(t0) + ", dt=" + format_real(dt) + ")");
    }
    parts.push_back(Signal::from_states(e.states, dt, t0));
  }
  return Signal::batch_of(parts);
}

} // namespace

SignalFile parse_signal_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::string_view l : split(text, '\n'))
    if (!l.empty() && l.front() != '#')
      lines.push_back(l);
  if (lines.empty())
    throw IoError("empty signal file");
  const auto header = split(lines[0], ',');
  std::size_t col = 0;
  const bool batched = header[0] == "batch";
  if (batched)
    ++col;
  if (header.size() <= col || header[col] != "t")
    throw IoError("signal CSV header must start with 't' (or 'batch,t')");
  ++col;
  SignalFile out{Signal::scalar({0.0}), {}};
  for (std::size_t j = col; j < header.size(); ++j)
    out.names.emplace_back(header[j]);
  const std::size_t dim = out.names.size();
  if (dim == 0)
    throw IoError("signal CSV needs at least one value column");

  std::vector<Element> elements;
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split(lines[r], ',');
    check_dim("line " + std::to_string(r + 1), header.size(), cells.size());
    std::size_t e = 0;
    if (batched) {
      auto it = index.find(cells[0]);
      if (it == index.end()) {
        it = index.emplace(std::string(cells[0]), elements.size()).first;
        elements.emplace_back();
      }
      e = it->second;
    } else if (elements.empty()) {
      elements.emplace_back();
    }
    elements[e].times.push_back(to_double(cells[col - 1], r + 1));
    std::vector<double> state(dim);
    for (std::size_t k = 0; k < dim; ++k)
      state[k] = to_double(cells[col + k], r + 1);
    elements[e].states.push_back(std::move(state));
  }
  out.signal = assemble(elements, std::nullopt);
  return out;
}

SignalFile parse_signal_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw IoError(std::string("signal JSON: ") + e.what());
  }
  try {
    const double t0 = j.value("t0", 0.0);
    const double dt = j.value("dt", 1.0);
    if (!j.contains("signals") || !j["signals"].is_array() || j["signals"].empty())
      throw IoError("signal JSON needs a nonempty 'signals' array");
    std::vector<Element> elements;
    std::size_t dim = 0;
    for (const auto &el : j["signals"]) {
      if (!el.is_array() || el.empty())
        throw IoError("each signal must be a nonempty array of samples");
      Element e;
      for (const auto &sample : el) {
        std::vector<double> state;
        if (sample.is_number())
          state.push_back(sample.get<double>());
        else
          state = sample.get<std::vector<double>>();
        if (dim == 0)
          dim = state.size();
        check_dim("signal sample", dim, state.size());
        e.times.push_back(t0 + static_cast<double>(e.times.size()) * dt);
        e.states.push_back(std::move(state));
      }
      elements.push_back(std::move(e));
    }
    SignalFile out{assemble(elements, dt), {}};
    if (j.contains("names"))
      out.names = j["names"].get<std::vector<std::string>>();
    else
      for (std::size_t k = 0; k < dim; ++k)
        out.names.push_back("x" + std::to_string(k));
    check_dim("names", dim, out.names.size());
    return out;
  } catch (const json::exception &e) {
    throw IoError(std::string("signal JSON: ") + e.what());
  } catch (const InvalidArgument &e) {
    throw IoError(std::string("signal JSON: ") + e.what());
  }
}

SignalFile read_signal(const std::string &path) {
  const std::string text = read_file(path);
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  return is_json ? parse_signal_json(text) : parse_signal_csv(text);
}

void write_signal_csv(std::ostream &os, const Signal &s,
                      const std::vector<std::string> &names) {
  const bool batched = s.batch() > 1;
  if (batched)
    os << "batch,";
  os << "t";
  for (std::size_t k = 0; k < s.dim(); ++k)
    os << "," << (k < names.size() ? names[k] : "x" + std::to_string(k));
  os << "\n";
  for (std::size_t b = 0; b < s.batch(); ++b)
    for (std::size_t i = 0; i < s.length(b); ++i) {
      if (batched)
        os << b << ",";
      os << format_real(s.time_of(i), 0);
      for (std::size_t k = 0; k < s.dim(); ++k)
        os << "," << format_real(s.at(b, i, k), 0);
      os << "\n";
    }
}

void write_trace_csv(std::ostream &os, const RobustnessTrace &trace, int digits) {
  const bool batched = trace.batch > 1;
  os << (batched ? "batch,t,rho\n" : "t,rho\n");
  for (std::size_t b = 0; b < trace.batch; ++b)
    for (std::size_t i = 0; i < trace.lengths[b]; ++i) {
      if (batched)
        os << b << ",";
      os << format_real(trace.t0 + static_cast<double>(i) * trace.dt, digits) << ","
         << format_real(trace.at(b, i), digits) << "\n";
    }
}

std::string trace_json(const RobustnessTrace &trace) {
  json j;
  j["formula"] = unparse(trace.formula);
  j["t0"] = trace.t0;
  j["dt"] = trace.dt;
  j["traces"] = json::array();
  for (std::size_t b = 0; b < trace.batch; ++b) {
    const auto row = trace.row(b);
    j["traces"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  return j.dump(2);
}

Approximation parse_mode(std::string_view text) {
  if (text == "exact")
    return Approximation::Exact;
  if (text == "soft" || text == "softmax")
    return Approximation::SoftMax;
  if (text == "logsumexp" || text == "lse")
    return Approximation::LogSumExp;
  throw IoError("unknown mode '" + std::string(text) +
                "' (expected exact, soft or logsumexp)");
}

std::string_view mode_name(Approximation mode) {
  switch (mode) {
  case Approximation::Exact:
    return "exact";
  case Approximation::SoftMax:
    return "soft";
  case Approximation::LogSumExp:
    return "logsumexp";
  }
  return "exact";
}

Padding parse_padding(std::string_view text) {
  if (text == "last")
    return Padding::last_value();
  for (std::string_view prefix : {"const:", "constant:"}) {
    if (text.substr(0, prefix.size()) == prefix)
      return Padding::constant(to_double(text.substr(prefix.size()), 0));
  }
  throw IoError("unknown padding '" + std::string(text) +
                "' (expected last or const:R)");
}

std::string padding_name(const Padding &p) {
  return p.kind == Padding::Kind::LastValue ? "last" : "const:" + format_real(p.value, 0);
}

EvalConfig parse_eval_config(std::string_view text) {
  EvalConfig cfg;
  try {
    const json j = json::parse(text);
    if (!j.is_object())
      throw IoError("config JSON must be an object");
    for (const auto &[key, value] : j.items()) {
      if (key == "mode")
        cfg.mode = parse_mode(value.get<std::string>());
      else if (key == "w")
        cfg.w = value.get<double>();
      else if (key == "padding")
        cfg.padding = parse_padding(value.get<std::string>());
      else if (key == "rho_max")
        cfg.rho_max = value.get<double>();
      else
        throw IoError("config JSON: unknown key '" + key + "'");
    }
    cfg.validate();
  } catch (const json::exception &e) {
    throw IoError(std::string("config JSON: ") + e.what());
  } catch (const InvalidArgument &e) {
    throw IoError(std::string("config JSON: ") + e.what());
  }
  return cfg;
}

std::string eval_config_json(const EvalConfig &cfg) {
  json j;
  j["mode"] = mode_name(cfg.mode);
  j["w"] = cfg.w;
  j["padding"] = padding_name(cfg.padding);
  j["rho_max"] = cfg.rho_max;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Problem files

namespace {

void check_keys(const json &j, std::initializer_list<std::string_view> allowed,
                const std::string &where) {
  if (!j.is_object())
    throw IoError(where + " must be a JSON object");
  for (const auto &[key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw IoError(where + ": unknown key '" + key + "'");
}

Point2 point(const json &j, const std::string &what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2)
    throw IoError(what + " must have two coordinates");
  return {v[0], v[1]};
}

std::vector<std::size_t> axes(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = k;
  return out;
}

Region region_of(const json &j, const std::string &name) {
  const std::string where = "region '" + name + "'";
  check_keys(j, {"box", "ball"}, where);
  if (j.contains("box") == j.contains("ball"))
    throw IoError(where + " needs exactly one of 'box' or 'ball'");
  if (j.contains("box")) {
    const json &b = j["box"];
    check_keys(b, {"lo", "hi", "axes"}, where);
    auto lo = b.at("lo").get<std::vector<double>>();
    auto hi = b.at("hi").get<std::vector<double>>();
    if (lo.size() != hi.size() || lo.empty())
      throw IoError(where + ": 'lo' and 'hi' need the same nonzero length");
    auto ax = b.contains("axes") ? b["axes"].get<std::vector<std::size_t>>() : axes(lo.size());
    if (ax.size() != lo.size())
      throw IoError(where + ": 'axes' must match the box dimension");
    for (std::size_t k = 0; k < lo.size(); ++k)
      if (!(lo[k] <= hi[k]))
        throw IoError(where + ": box needs lo <= hi");
    return Region::box(std::move(ax), std::move(lo), std::move(hi));
  }
  const json &c = j["ball"];
  check_keys(c, {"center", "radius", "axes"}, where);
  auto center = c.at("center").get<std::vector<double>>();
  const double radius = c.at("radius").get<double>();
  if (center.empty() || !(radius > 0.0))
    throw IoError(where + ": ball needs a center and a positive radius");
  auto ax = c.contains("axes") ? c["axes"].get<std::vector<std::size_t>>() : axes(center.size());
  if (ax.size() != center.size())
    throw IoError(where + ": 'axes' must match the center dimension");
  return Region::ball(std::move(ax), std::move(center), radius);
}

Monotonicity monotonicity_of(const std::string &s) {
  if (s == "increasing")
    return Monotonicity::Increasing;
  if (s == "decreasing")
    return Monotonicity::Decreasing;
  throw IoError("monotonicity must be 'increasing' or 'decreasing', got '" + s + "'");
}

template <class Fn> auto json_guard(const std::string &what, Fn &&fn) {
  try {
    return fn();
  } catch (const json::exception &e) {
    throw IoError(what + ": " + e.what());
  } catch (const ParseError &e) {
    throw IoError(what + ": formula: " + e.what());
  } catch (const InvalidArgument &e) {
    throw IoError(what + ": " + e.what());
  }
}

} // namespace

Region parse_region(std::string_view text) {
  return json_guard("region JSON", [&] { return region_of(json::parse(text), "region"); });
}

PlanSpec parse_plan_spec(std::string_view text) {
  return json_guard("plan JSON", [&] {
    const json j = json::parse(text);
    check_keys(j, {"start", "goal", "steps", "dt", "u_max", "regions", "formula", "gamma1",
                   "gamma2", "margin", "optimizer"},
               "plan JSON");
    PlanSpec spec;
    PlanProblem &p = spec.problem;
    if (j.contains("start"))
      p.start = point(j["start"], "start");
    if (j.contains("goal"))
      p.goal = point(j["goal"], "goal");
    p.steps = j.value("steps", p.steps);
    p.dt = j.value("dt", p.dt);
    p.u_max = j.value("u_max", p.u_max);
    p.gamma1 = j.value("gamma1", p.gamma1);
    p.gamma2 = j.value("gamma2", p.gamma2);
    p.margin = j.value("margin", p.margin);
    ParserConfig pc;
    pc.dim = 2;
    pc.aliases = {{"x", 0}, {"y", 1}};
    if (j.contains("regions"))
      for (const auto &[name, value] : j["regions"].items())
        pc.regions.emplace(name, region_of(value, name));
    p.phi = parse(j.value("formula", std::string("true")), pc);
    p.validate();

    PlanOptions &o = spec.options;
    if (j.contains("optimizer")) {
      const json &opt = j["optimizer"];
      check_keys(opt, {"step", "iters", "mode", "w0", "growth", "w_max", "tol", "project"},
                 "plan optimizer");
      o.step = opt.value("step", o.step);
      o.max_iters = opt.value("iters", o.max_iters);
      if (opt.contains("mode"))
        o.cfg.mode = parse_mode(opt["mode"].get<std::string>());
      o.anneal.w0 = opt.value("w0", o.anneal.w0);
      o.anneal.growth = opt.value("growth", o.anneal.growth);
      o.anneal.w_max = opt.value("w_max", o.anneal.w_max);
      o.tol = opt.value("tol", o.tol);
      o.project = opt.value("project", o.project);
    }
    o.anneal.validate();
    return spec;
  });
}

PstlSpec parse_pstl_spec(std::string_view text, const std::string &base_dir,
                         std::optional<std::uint64_t> seed) {
  return json_guard("fit JSON", [&] {
    const json j = json::parse(text);
    check_keys(j, {"template", "signals", "parameters", "monotone", "step", "iters", "tol",
                   "bisect_tol", "mode", "w"},
               "fit JSON");
    PstlSpec spec;
    ParserConfig pc;
    if (j.contains("parameters"))
      for (const auto &[name, value] : j["parameters"].items())
        pc.parameters[name] = value.get<double>();
    const json &sig = j.at("signals");
    if (sig.is_string()) {
      std::filesystem::path path(sig.get<std::string>());
      if (path.is_relative())
        path = std::filesystem::path(base_dir) / path;
      const SignalFile f = read_signal(path.string());
      spec.problem.data = f.signal;
      for (std::size_t k = 0; k < f.names.size(); ++k)
        pc.aliases.emplace(f.names[k], k);
    } else {
      check_keys(sig, {"generate"}, "fit signals");
      const json &g = sig.at("generate");
      check_keys(g, {"count", "samples", "dt", "seed", "omega", "zeta"}, "fit generate");
      StepResponseOptions so;
      so.count = g.value("count", so.count);
      so.samples = g.value("samples", so.samples);
      so.dt = g.value("dt", so.dt);
      so.seed = seed ? *seed : g.value("seed", so.seed);
      if (g.contains("omega")) {
        const auto r = point(g["omega"], "omega range");
        so.omega_lo = r[0];
        so.omega_hi = r[1];
      }
      if (g.contains("zeta")) {
        const auto r = point(g["zeta"], "zeta range");
        so.zeta_lo = r[0];
        so.zeta_hi = r[1];
      }
      spec.problem.data = step_responses(so);
    }
    pc.dim = spec.problem.data.dim();
    spec.problem.templ = parse(j.at("template").get<std::string>(), pc);
    if (j.contains("monotone"))
      for (const auto &[name, value] : j["monotone"].items())
        spec.problem.monotone[name] = monotonicity_of(value.get<std::string>());
    spec.options.step = j.value("step", spec.options.step);
    spec.options.max_iters = j.value("iters", spec.options.max_iters);
    spec.options.tol = j.value("tol", spec.options.tol);
    if (j.contains("mode"))
      spec.options.cfg.mode = parse_mode(j["mode"].get<std::string>());
    spec.options.cfg.w = j.value("w", spec.options.cfg.w);
    spec.options.cfg.validate();
    spec.bisect.tol = j.value("bisect_tol", spec.bisect.tol);
    return spec;
  });
}

std::string fit_report_json(const PstlFit &fit, std::string_view method) {
  json j;
  j["method"] = method;
  j["parameters"] = json::object();
  for (const auto &[name, values] : fit.params)
    j["parameters"][name] = values;
  j["robustness"] = fit.robustness;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["wall_time_s"] = fit.seconds;
  return j.dump(2);
}

std::string plan_report_json(const PlanResult &r) {
  json j;
  j["rho_phi"] = r.rho_phi;
  j["rho_theta"] = r.rho_theta;
  j["satisfied"] = r.satisfied();
  j["dynamics_residual"] = r.residual;
  j["dynamics_residual_before_projection"] = r.residual_raw;
  j["loss"] = r.loss;
  j["iterations"] = r.iterations;
  j["smoothness"] = smoothness(r.states);
  return j.dump(2);
}

void write_trajectory_csv(std::ostream &os, const PlanResult &r, double dt) {
  os << "k,t,x,y,ux,uy\n";
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    os << k << "," << format_real(static_cast<double>(k) * dt, 0) << ","
       << format_real(r.states[k][0], 0) << "," << format_real(r.states[k][1], 0);
    if (k < r.controls.size())
      os << "," << format_real(r.controls[k][0], 0) << "," << format_real(r.controls[k][1], 0);
    else
      os << ",,";
    os << "\n";
  }
}

std::string format_real(double v, int digits) {
  if (digits <= 0)
    return format_number(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out)
    throw IoError("error writing '" + path + "'");
}

} // namespace stlgrad
