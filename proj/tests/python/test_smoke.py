import math
import os

import numpy as np
import pytest

import stlgrad

DATA = os.environ.get(
    "STLGRAD_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "data")
)
TABLE1 = np.array([1.0, 1.0, 1.0, 2.0, 3.0, 1.0])


def test_parse_round_trip():
    f = stlgrad.parse("always[0,5] (x0 > 1 and eventually x1 < c)")
    assert f.op == "always"
    assert f.interval == (0.0, 5.0)
    assert f.parameters == ["c"]
    assert f.required_dim == 2
    assert stlgrad.parse(str(f)) == f
    assert stlgrad.to_dot(f).startswith("digraph")


def test_parse_error_carries_offset():
    with pytest.raises(stlgrad.ParseError) as info:
        stlgrad.parse("x0 >")
    assert info.value.start == 4
    assert isinstance(info.value, stlgrad.StlgradError)


def test_eventually_on_table_signal():
    f = stlgrad.parse("eventually[1,3] s > 0", aliases={"s": 0})
    assert stlgrad.robustness(f, TABLE1) == 2.0
    tr = stlgrad.trace(f, TABLE1)
    assert tr.shape == (6,)
    assert tr[0] == 2.0


def test_batched_shapes_and_parameters():
    signals = np.stack([TABLE1, TABLE1 + 1.0])[:, :, None]
    f = stlgrad.parse("always x0 < c")
    rho = stlgrad.robustness(f, signals, params={"c": [4.0, 5.0]})
    np.testing.assert_allclose(rho, [1.0, 1.0])
    assert stlgrad.trace(f, signals, params={"c": 4.0}).shape == (2, 6)
    assert stlgrad.satisfies(f, signals, params={"c": 3.5}) == [True, False]


def test_gradient_matches_finite_difference():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(12, 2))
    f = stlgrad.parse("eventually[0,4] (x0 > 0.2 and always[0,2] x1 < c)")
    rho, dx, dp = stlgrad.gradient(f, x, mode="soft", w=2.0, params={"c": 0.5})
    assert rho == pytest.approx(stlgrad.robustness(f, x, mode="soft", w=2.0, params={"c": 0.5}))
    h = 1e-6
    for idx in [(0, 0), (3, 1), (7, 0), (11, 1)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        num = (
            stlgrad.robustness(f, xp, mode="soft", w=2.0, params={"c": 0.5})
            - stlgrad.robustness(f, xm, mode="soft", w=2.0, params={"c": 0.5})
        ) / (2 * h)
        assert dx[idx] == pytest.approx(num, abs=1e-6)
    assert set(dp) == {"c"}


def test_invalid_signal_shape():
    with pytest.raises(stlgrad.InvalidArgument):
        stlgrad.robustness(stlgrad.parse("true"), np.zeros((1, 1, 1, 1)))


def test_fit_and_bisection_agree():
    signals = stlgrad.step_responses(count=10, samples=60, seed=3)
    assert signals.shape == (10, 60, 1)
    f = stlgrad.parse("always x0 < e")
    b = stlgrad.bisect_fit(f, signals)
    g = stlgrad.fit_pstl(f, signals, step=5e-4, iters=200000)
    assert g["parameters"]["e"].shape == (10,)
    np.testing.assert_allclose(g["parameters"]["e"], b["parameters"]["e"], atol=2e-3)
    np.testing.assert_allclose(b["parameters"]["e"], signals.max(axis=(1, 2)), atol=1e-6)
    assert min(b["robustness"]) >= -1e-6


def test_fit_file_from_data_dir():
    r = stlgrad.fit_file(os.path.join(DATA, "pstl_eps2.json"), method="bisection", seed=1)
    assert r["method"] == "bisection"
    assert r["parameters"]["eps2"].shape == (100,)
    assert (r["parameters"]["eps2"] >= 1.0).all()


def test_plan_small_problem():
    problem = {
        "start": [-1, -1],
        "goal": [1, 1],
        "steps": 20,
        "dt": 0.1,
        "u_max": 2,
        "regions": {"B": {"box": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5]}}},
        "formula": "eventually inside B",
        "optimizer": {"iters": 500},
    }
    r = stlgrad.plan(problem)
    assert r["states"].shape == (21, 2)
    assert r["controls"].shape == (20, 2)
    assert r["satisfied"]
    assert r["dynamics_residual"] < 1e-9
    np.testing.assert_allclose(r["states"][0], [-1, -1])


def test_regfit_penalty_reduces_violation():
    t = np.linspace(0.0, 5.0, 101)
    y = np.exp(-((t - 2.5) ** 2) * 4) + 0.05 * np.sin(7 * t)
    f = stlgrad.parse("always x0 < 0.8")
    free = stlgrad.regfit(t, y, f, basis="pwl", size=21, gamma=0.0)
    pen = stlgrad.regfit(t, y, f, basis="pwl", size=21, gamma=10.0, iters=3000)
    assert free["robustness"] < 0
    assert pen["robustness"] > free["robustness"]
    assert math.isfinite(pen["mse"])
    assert pen["output"].shape == t.shape
