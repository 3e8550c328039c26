#pragma once

// Signal, trace and configuration files.
//
// Signal CSV: a header `t,x0,x1,...` (any column names after `t`) followed by
// one row per sample. An optional leading `batch` column groups rows into
// batch elements, which may have different lengths. Samples must be evenly
// spaced and share t0 and dt across elements.
//
// Signal JSON: {"t0": 0, "dt": 1, "names": [...], "signals": [E, ...]} where
// each element E is a list of samples, each sample a number (1-D) or a list.

#include "stlgrad/core.hpp"
#include "stlgrad/optim.hpp"
#include "stlgrad/parser.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stlgrad {

class IoError : public Error {
public:
  using Error::Error;
};

struct SignalFile {
  Signal signal;
  /// Column names, one per state coordinate.
  std::vector<std::string> names;
};

SignalFile parse_signal_csv(std::string_view text);
SignalFile parse_signal_json(std::string_view text);
/// Picks the format from the extension (.json, anything else is CSV).
SignalFile read_signal(const std::string &path);

void write_signal_csv(std::ostream &os, const Signal &s,
                      const std::vector<std::string> &names = {});

/// `t,rho` rows, with a leading `batch` column when there is more than one
/// element. Values use `digits` significant digits.
void write_trace_csv(std::ostream &os, const RobustnessTrace &trace,
                     int digits = 9);
std::string trace_json(const RobustnessTrace &trace);

/// {"mode": "exact" | "soft" | "logsumexp", "w": 1, "padding": "last" |
/// "const:R", "rho_max": 1e6}; missing keys keep their defaults.
EvalConfig parse_eval_config(std::string_view json);
std::string eval_config_json(const EvalConfig &cfg);

Approximation parse_mode(std::string_view text);
std::string_view mode_name(Approximation mode);
Padding parse_padding(std::string_view text);
std::string padding_name(const Padding &p);

/// Shortest round-trip text when digits == 0, else %.{digits}g.
std::string format_real(double v, int digits = 9);

// ---------------------------------------------------------------------------
// Problem files

/// Planning problem:
///   {"start": [x, y], "goal": [x, y], "steps": N, "dt": 0.1, "u_max": 1,
///    "regions": {"B1": {"box": {"lo": [..], "hi": [..]}},
///                "C": {"ball": {"center": [..], "radius": r}}},
///    "formula": "...", "gamma1": 0.3, "gamma2": 0.3, "margin": 0.05,
///    "optimizer": {"step": 0.05, "iters": 5000, "mode": "soft",
///                  "w0": 1, "growth": 1.05, "w_max": 50, "tol": 1e-9}}
struct PlanSpec {
  PlanProblem problem;
  PlanOptions options;
};
PlanSpec parse_plan_spec(std::string_view json);

/// Parametric template fit:
///   {"template": "...", "signals": "data.csv" | {"generate": {"count": 100,
///    "samples": 100, "dt": 1, "seed": 0}}, "parameters": {"eps": 0},
///    "monotone": {"eps": "increasing"}, "step": 5e-4, "iters": 200000,
///    "tol": 1e-6, "bisect_tol": 1e-9}
/// Relative signal paths resolve against `base_dir`; `seed` replaces the
/// generator seed when given.
struct PstlSpec {
  PstlProblem problem;
  PstlOptions options;
  BisectOptions bisect;
};
PstlSpec parse_pstl_spec(std::string_view json, const std::string &base_dir = ".",
                         std::optional<std::uint64_t> seed = {});

Region parse_region(std::string_view json);

std::string fit_report_json(const PstlFit &fit, std::string_view method);
std::string plan_report_json(const PlanResult &r);
void write_trajectory_csv(std::ostream &os, const PlanResult &r, double dt);

std::string read_file(const std::string &path);
void write_file(const std::string &path, std::string_view content);

} // namespace stlgrad
