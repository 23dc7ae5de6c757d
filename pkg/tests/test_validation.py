import warnings

import numpy as np
import pytest

from stickygraph.bvp import solve_elliptic, solve_parabolic
from stickygraph.errors import ContinuityError, DegenerateInput, TruncationWarning
from stickygraph.graph import VERTEX, GraphPoint, build_graph
from stickygraph.paths import simulate_sticky, stream
from stickygraph.validation import (
    TestFunction,
    constant_function,
    convergence_slope,
    exp_affine_function,
    ito_residual,
    mc_exit_stats,
    mc_feynman_kac_elliptic,
    mc_feynman_kac_parabolic,
    radial_function,
    time_function,
    wilson_halfwidth,
)


def test_convergence_slope():
    xs = np.array([0.1, 0.2, 0.4, 0.8])
    assert convergence_slope(xs, xs**2) == pytest.approx(2.0)
    assert convergence_slope(xs, np.full(4, 3.0)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DegenerateInput):
        convergence_slope([0.1, 0.2], [1.0, 2.0])
    with pytest.raises(DegenerateInput):
        convergence_slope([0.1, 0.2, 0.3], [1.0, -2.0, 1.0])


def test_wilson_halfwidth():
    assert wilson_halfwidth(np.array([0.5]), 100)[0] == pytest.approx(0.0962, abs=1e-3)


def test_exit_stats_small_run(sym3):
    st = mc_exit_stats(sym3, 0.1, 2000, 1e-5, 1)
    assert abs(st.mean_exit_time - 0.055) <= max(3 * st.exit_time_se, 0.02 * 0.055)
    assert abs(st.mean_vertex_occupation - 0.05) <= 3 * st.vertex_occupation_se + 0.01
    assert st.edge_frequency.sum() == pytest.approx(1.0)
    assert st.capped_fraction == 0.0


def test_exit_stats_reproducible(sym3):
    a = mc_exit_stats(sym3, 0.1, 200, 1e-4, 5)
    b = mc_exit_stats(sym3, 0.1, 200, 1e-4, 5)
    assert a.mean_exit_time == b.mean_exit_time
    assert np.array_equal(a.edge_frequency, b.edge_frequency)


def test_worker_count_does_not_change_results(sym3, monkeypatch):
    one = mc_exit_stats(sym3, 0.1, 64, 1e-4, 9)
    monkeypatch.setenv("STICKYGRAPH_WORKERS", "2")
    two = mc_exit_stats(sym3, 0.1, 64, 1e-4, 9)
    assert one.mean_exit_time == two.mean_exit_time
    assert one.exit_time_se == two.exit_time_se


def test_capping_is_reported(sym3):
    with pytest.warns(RuntimeWarning):
        st = mc_exit_stats(sym3, 5.0, 20, 1e-3, 1, t_cap=0.01)
    assert st.capped_fraction == 1.0


def test_fk_elliptic_constant_solution(sym3):
    est = mc_feynman_kac_elliptic(sym3, 1.0, -1.0, -1.0, GraphPoint(2, 0.3), 200, 1e-3, 20.0, 1)
    assert abs(est.value - 1.0) <= 3 * est.std_error + est.bias_bound
    off = mc_feynman_kac_elliptic(sym3, 1.0, -1.0, -1.0, VERTEX, 200, 1e-3, 20.0, 1, vertex_term=False)
    assert 1.0 - off.value > 3 * off.std_error + off.bias_bound


def test_fk_elliptic_without_stickiness(sym3):
    g = sym3.with_eta(0.0)
    for theta in (-1.0, 5.0):
        est = mc_feynman_kac_elliptic(g, 2.0, -1.0, theta, VERTEX, 50, 1e-3, 10.0, 1)
        assert abs(est.value - 0.5) <= 3 * est.std_error + est.bias_bound + 1e-12


def test_fk_elliptic_scaling(sym3):
    f = [lambda x: np.sin(x), lambda x: -x / (1 + x), lambda x: np.zeros_like(x)]
    a = mc_feynman_kac_elliptic(sym3, 1.0, f, 0.0, GraphPoint(1, 0.2), 100, 1e-3, 10.0, 4)
    f3 = [lambda x, h=h: 3.0 * h(x) for h in f]
    b = mc_feynman_kac_elliptic(sym3, 1.0, f3, 0.0, GraphPoint(1, 0.2), 100, 1e-3, 10.0, 4)
    assert b.value == pytest.approx(3.0 * a.value, rel=1e-12)
    assert np.allclose(b.samples, 3.0 * a.samples, rtol=1e-12, atol=1e-15)


def test_fk_elliptic_matches_finite_differences():
    g = build_graph({"n_edges": 3, "rho": [0.5, 0.3, 0.2], "eta": 0.5, "sigma": 1.0})
    f = [{"kind": "affine", "a0": -1.0, "a1": c} for c in (0.5, -0.3, 1.0)]
    est = mc_feynman_kac_elliptic(g, 1.0, f, -2.0, VERTEX, 1500, 2e-3, 15.0, 7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        oracle = solve_elliptic(g, 1.0, f, -2.0, truncation_R=15.0, mesh_m=1501).vertex()
    assert abs(est.value - oracle) <= max(0.02 * abs(oracle), 3 * est.std_error)


def test_std_error_scales(sym3):
    f = [lambda x: np.cos(3 * x)] * 3
    a = mc_feynman_kac_elliptic(sym3, 1.0, f, 1.0, VERTEX, 400, 2e-3, 8.0, 11)
    b = mc_feynman_kac_elliptic(sym3, 1.0, f, 1.0, VERTEX, 800, 2e-3, 8.0, 12)
    ratio = b.std_error / a.std_error
    assert abs(ratio - 2**-0.5) <= 0.2 * 2**-0.5


def test_fk_parabolic_trivial_cases(sym3):
    est = mc_feynman_kac_parabolic(sym3, 1.0, None, None, 0.7, 0.0, VERTEX, 20, 1e-3, 1)
    assert est.value == 0.7 and est.std_error == 0.0
    u_T = lambda x: np.exp(-x)  # noqa: E731
    est = mc_feynman_kac_parabolic(sym3, 1.0, None, None, u_T, 1.0, GraphPoint(2, 0.4), 5, 1e-3, 1)
    assert est.value == np.exp(-0.4)


def test_fk_parabolic_with_sources(sym3):
    # u(t) = (T - t) c whatever the path: the estimator is deterministic
    c = 0.3
    est = mc_feynman_kac_parabolic(sym3, 1.0, lambda t, e, x: np.full_like(x, c), lambda t: c, 0.0,
                                   0.25, VERTEX, 20, 1e-3, 2)
    assert est.value == pytest.approx(0.75 * c, rel=1e-12)


def test_fk_parabolic_small_run(sym3):
    u_T = lambda x: np.exp(-x)  # noqa: E731
    est = mc_feynman_kac_parabolic(sym3, 1.0, None, None, u_T, 0.0, VERTEX, 1000, 1e-3, 6)
    oracle = solve_parabolic(sym3, 1.0, None, None, u_T, mesh_m=200, time_steps=200).vertex(0)
    assert abs(est.value - oracle) <= max(0.02 * oracle, 3 * est.std_error)


@pytest.fixture
def sticky_path(sym3):
    return simulate_sticky(sym3, VERTEX, 1.0, 1e-4, stream(77, 0), keep_noise=True)


def test_ito_constant_and_time(sym3, sticky_path):
    _, m = ito_residual(sym3, sticky_path, constant_function(2.5))
    assert np.all(m == 0.0)
    _, m = ito_residual(sym3, sticky_path, time_function())
    assert np.max(np.abs(m)) <= 1e-12


def test_ito_radial_residual_is_the_noise(sym3, sticky_path):
    _, m = ito_residual(sym3, sticky_path, radial_function(n_edges=3))
    w = np.cumsum(sticky_path.noise)
    off = sticky_path.xs > 0
    assert np.max(np.abs(m[off] - w[off])) <= 1e-10


def test_ito_requires_continuity(sym3, sticky_path):
    bad = TestFunction(
        lambda t, e, x: np.asarray(e, float) + x,
        lambda t, e, x: 0.0 * x,
        lambda t, e, x: 1.0 + 0.0 * x,
        lambda t, e, x: 0.0 * x,
    )
    with pytest.raises(ContinuityError):
        ito_residual(sym3, sticky_path, bad)


def test_ito_residual_mean_and_increments(sym3):
    f = exp_affine_function([1.0, -2.0, 0.5])
    ends, lag1 = [], []
    for i in range(300):
        p = simulate_sticky(sym3, VERTEX, 1.0, 1e-3, stream(13, i))
        t, m = ito_residual(sym3, p, f)
        ends.append(m[-1])
        grid = np.searchsorted(t, np.linspace(0, 1, 21))
        d = np.diff(m[np.minimum(grid, len(t) - 1)])
        lag1.append(np.sum(d[1:] * d[:-1]))
    ends = np.array(ends)
    assert abs(ends.mean()) <= 3 * ends.std(ddof=1) / np.sqrt(ends.size)
    lag1 = np.array(lag1)
    # 99% band for the mean lag-1 product of increments
    assert abs(lag1.mean()) <= 2.576 * lag1.std(ddof=1) / np.sqrt(lag1.size)
