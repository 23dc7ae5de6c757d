import numpy as np
import pytest

from stickygraph.graph import VERTEX, GraphPoint, build_graph
from stickygraph.localtime import (
    occupation_estimator,
    stieltjes_integral,
    upcrossing_estimator,
    vertex_integral,
    vertex_occupation,
)
from stickygraph.paths import NONSTICKY, Path, simulate_nonsticky, simulate_sticky, stream
from stickygraph.timechange import stickify


def _path(times, xs, edges=None, ell=None):
    n = len(times)
    return Path(
        np.array(times, float),
        np.array(edges if edges is not None else [1] * n),
        np.array(xs, float),
        np.array(ell if ell is not None else [0.0] * n),
        NONSTICKY,
    )


def test_nonsticky_occupation_is_zero(sym3):
    p = simulate_nonsticky(sym3, VERTEX, 1.0, 1e-3, stream(1, 1))
    assert vertex_occupation(p) == 0.0


def test_occupation_of_jump_example(jump_path):
    assert vertex_occupation(stickify(None, jump_path, 0.5), 1.0) == pytest.approx(0.1)


def test_occupation_identity_pathwise(sym3):
    for i in range(50):
        x = simulate_sticky(sym3, VERTEX, 1.0, 1e-3, stream(8, i))
        assert vertex_occupation(x) == pytest.approx(sym3.eta * x.ell[-1], rel=1e-12)


def test_occupation_estimator_far_path():
    g = build_graph({"n_edges": 1, "rho": [1.0], "sigma": 1.0})
    p = _path([0, 1, 2], [1.0, 1.5, 2.0])
    assert occupation_estimator(g, p, 0.5) == 0.0


def test_occupation_estimator_scaling():
    g = build_graph({"n_edges": 1, "rho": [1.0], "sigma": 1.0})
    # a quarter of the time strictly inside (0, 0.1]
    p = _path([0.0, 0.25, 1.0], [0.05, 0.5, 0.5])
    assert occupation_estimator(g, p, 0.1) == pytest.approx(0.5 / 0.1 * 0.25)


def test_upcrossings():
    p = _path([0, 1, 2, 3, 4, 5], [0.5, 0.0, 0.2, 0.0, 0.3, 0.1])
    assert upcrossing_estimator(p, 0.2) == pytest.approx(0.4)
    assert upcrossing_estimator(p, 0.2, t=3.0) == pytest.approx(0.2)
    assert upcrossing_estimator(_path([0, 1], [0.5, 0.7]), 0.2) == 0.0


def test_estimators_nonnegative_and_monotone(sym3):
    x = simulate_sticky(sym3, VERTEX, 1.0, 1e-4, stream(1, 0))
    ts = np.linspace(0.1, 1.0, 10)
    for est in (
        lambda t: upcrossing_estimator(x, 0.05, t),
        lambda t: occupation_estimator(sym3, x, 0.05, t),
    ):
        vals = np.array([est(t) for t in ts])
        assert np.all(vals >= 0) and np.all(np.diff(vals) >= 0)


def test_stieltjes(jump_path):
    assert stieltjes_integral(jump_path, lambda s: np.ones_like(s)) == pytest.approx(0.2)
    assert stieltjes_integral(jump_path, lambda s: s) == pytest.approx(0.1)
    assert stieltjes_integral(jump_path, lambda s: 0.0 * s) == 0.0


def test_vertex_integral_matches_local_time_integral(sym3):
    step = lambda s: np.where(s < 0.5, 1.0, -2.0)  # noqa: E731
    for i in range(20):
        x = simulate_sticky(sym3, VERTEX, 1.0, 1e-3, stream(12, i))
        lhs = vertex_integral(x, step)
        rhs = sym3.eta * stieltjes_integral(x, step)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)


def test_estimators_agree_with_local_time():
    g = build_graph({"n_edges": 3, "rho": [0.5, 0.3, 0.2], "eta": 0.5, "sigma": 1.0})
    ell, up, occ = [], [], []
    for i in range(40):
        x = simulate_sticky(g, GraphPoint(1, 0.0), 1.0, 1e-5, stream(31, i))
        ell.append(x.ell[-1])
        up.append(upcrossing_estimator(x, 0.02))
        occ.append(occupation_estimator(g, x, 0.02))
    m = np.mean(ell)
    assert abs(np.mean(up) - m) <= 0.15 * m
    assert abs(np.mean(occ) - m) <= 0.15 * m
