import numpy as np
import pytest

from stickygraph.graph import VERTEX, GraphPoint, build_graph, distance
from stickygraph.paths import simulate_nonsticky, simulate_sticky, simulate_until_exit, step, stream
from stickygraph.validation import wilson_halfwidth


@pytest.fixture
def unit3():
    return build_graph({"n_edges": 3, "rho": [0.5, 0.3, 0.2], "eta": 0.5, "sigma": 1.0, "drift": 0.0})


def test_step_without_crossing(unit3):
    nxt, dl, crossed, _ = step(unit3, GraphPoint(1, 0.5), 0.01, 1.0, 0.9)
    assert nxt == GraphPoint(1, 0.6)
    assert dl == 0.0 and not crossed


def test_step_through_vertex(unit3):
    # y* = 0.05 - 0.1 = -0.05; mirror reflection lands at 0.05 and the push is 2|y*|
    nxt, dl, crossed, theta = step(unit3, GraphPoint(1, 0.05), 0.01, -1.0, 0.6)
    assert crossed
    assert theta == pytest.approx(0.5)
    assert nxt.x == pytest.approx(0.05)
    assert dl == pytest.approx(0.1)
    assert nxt.edge == 2


def test_step_from_vertex_draws_edge_first(unit3):
    nxt, dl, crossed, _ = step(unit3, VERTEX, 0.01, 1.0, 0.6)
    assert nxt == GraphPoint(2, 0.1)
    assert dl == 0.0 and not crossed
    nxt, dl, _, _ = step(unit3, VERTEX, 0.01, -1.0, 0.95)
    assert nxt == GraphPoint(3, 0.1)
    assert dl == pytest.approx(0.2)


def test_far_start_never_reaches_vertex(unit3):
    p = simulate_nonsticky(unit3, GraphPoint(2, 10.0), 1.0, 1e-3, stream(0, 0))
    assert p.ell[-1] == 0.0
    assert np.all(p.xs > 0)


@pytest.mark.parametrize("x0", [VERTEX, GraphPoint(2, 0.3)])
def test_path_invariants(unit3, x0):
    for i in range(20):
        p = simulate_nonsticky(unit3, x0, 1.0, 1e-3, stream(7, i))
        p.check()
        assert p.times[0] == 0.0 and p.times[-1] == pytest.approx(1.0)
        assert not np.any(p.plateau_mask()), "nonsticky paths spend no time at the vertex"


def test_local_time_is_cumulative_push(unit3):
    p = simulate_nonsticky(unit3, VERTEX, 1.0, 1e-3, stream(3, 0))
    pushes = np.diff(p.ell)
    assert np.all(p.xs[:-1][pushes > 0] == 0.0)
    assert p.ell[-1] == pytest.approx(np.cumsum(pushes)[-1], rel=1e-12)
    assert p.ell[-1] > 0


def test_determinism(unit3):
    a = simulate_sticky(unit3, VERTEX, 1.0, 1e-3, stream(42, 5))
    b = simulate_sticky(unit3, VERTEX, 1.0, 1e-3, stream(42, 5))
    c = simulate_sticky(unit3, VERTEX, 1.0, 1e-3, stream(42, 6))
    for name in ("times", "edges", "xs", "ell"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.xs[: len(c)], c.xs[: len(a)])


def test_quadratic_variation():
    g = build_graph({"n_edges": 3, "rho": [1 / 3] * 3, "sigma": 2**0.5, "eta": 0.0})
    qv = np.empty(1000)
    for i in range(qv.size):
        p = simulate_nonsticky(g, VERTEX, 1.0, 1e-3, stream(11, i))
        # a crossing knot splits one Euler step; that step's increment is x + x'
        inner = np.flatnonzero(p.xs[1:-1] == 0.0) + 1
        x = p.xs
        d = np.abs(np.diff(x))
        d[inner - 1] = x[inner - 1] + x[inner + 1]
        d[inner] = 0.0
        qv[i] = np.sum(d**2)
    se = qv.std(ddof=1) / np.sqrt(qv.size)
    assert abs(qv.mean() - 2.0) <= 3 * se


def test_edge_draws_follow_rho(unit3):
    counts = np.zeros(3)
    i = 0
    while counts.sum() < 1e4:
        p = simulate_nonsticky(unit3, VERTEX, 1.0, 1e-3, stream(5, i))
        at_v = np.flatnonzero(p.xs[:-1] == 0.0)
        counts += np.bincount(p.edges[at_v + 1], minlength=4)[1:]
        i += 1
    n = int(counts.sum())
    freq = counts / n
    assert np.all(np.abs(freq - unit3.rho) <= 3 * wilson_halfwidth(freq, n))


def test_exit_without_stickiness(unit3):
    g = unit3.with_eta(0.0)
    r = simulate_until_exit(g, 0.1, 1e-4, stream(1, 0))
    assert r.vertex_occupation == 0.0
    assert r.exit_time == r.nonsticky_exit_time
    assert not r.capped


def test_sticky_exit_adds_occupation(unit3):
    r = simulate_until_exit(unit3, 0.1, 1e-4, stream(1, 0))
    assert r.exit_time == pytest.approx(r.nonsticky_exit_time + 0.5 * r.local_time)
    assert r.vertex_occupation == pytest.approx(0.5 * r.local_time)
    assert r.exit_edge in (1, 2, 3)


def test_exit_cap(unit3):
    r = simulate_until_exit(unit3, 100.0, 1e-3, stream(1, 0), t_cap=0.01)
    assert r.capped


def test_exit_position_is_at_delta(unit3):
    p = simulate_sticky(unit3, VERTEX, 0.5, 1e-4, stream(2, 0))
    assert distance(unit3, VERTEX, p.point(len(p) - 1)) == pytest.approx(p.xs[-1])
