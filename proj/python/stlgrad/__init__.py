"""Differentiable signal temporal logic.

Signals are numpy arrays of shape (T,), (T, n) or (B, T, n). Formulas come
from :func:`parse`; coordinates are named x0, x1, ... unless aliased.
"""

import json
import os

from ._stlgrad import (
    EvalError,
    Formula,
    InvalidArgument,
    IoError,
    OptimError,
    ParseError,
    Region,
    StlgradError,
    bisect_fit,
    fit_pstl,
    gradient,
    parse,
    regfit,
    robustness,
    satisfies,
    step_responses,
    to_dot,
    trace,
)
from . import _stlgrad

__all__ = [
    "EvalError",
    "Formula",
    "InvalidArgument",
    "IoError",
    "OptimError",
    "ParseError",
    "Region",
    "StlgradError",
    "bisect_fit",
    "fit_file",
    "fit_pstl",
    "gradient",
    "parse",
    "plan",
    "regfit",
    "robustness",
    "satisfies",
    "step_responses",
    "to_dot",
    "trace",
]


def _problem_text(problem):
    if isinstance(problem, dict):
        return json.dumps(problem), "."
    path = os.fspath(problem)
    with open(path, encoding="utf-8") as f:
        return f.read(), os.path.dirname(os.path.abspath(path))


def plan(problem, *, step=None, iters=None, project=None):
    """Solve a planning problem given as a dict or a path to a JSON file."""
    text, _ = _problem_text(problem)
    return _stlgrad.plan_problem(text, step=step, iters=iters, project=project)


def fit_file(problem, *, method="gradient", seed=None):
    """Run a parametric template fit given as a dict or a path to a JSON file.

    ``method`` is "gradient" or "bisection".
    """
    text, base = _problem_text(problem)
    return _stlgrad.fit_problem(text, base_dir=base, method=method, seed=seed)
