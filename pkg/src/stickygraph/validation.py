"""Monte Carlo estimators of the representation formulas and statistics for
the small-ball laws at the vertex.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .bvp import edge_functions
from .errors import ContinuityError, DegenerateInput
from .graph import VERTEX, GraphPoint, StarGraph
from .paths import Path, simulate_sticky, simulate_until_exit, stream

WORKERS_ENV = "STICKYGRAPH_WORKERS"
WILSON_Z = 1.959963984540054


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_paths: int
    dt: float
    seed: int
    config_hash: str
    bias_bound: float = 0.0
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def within(self, target: float, n_se: float = 3.0, rel: float = 0.0) -> bool:
        tol = max(n_se * self.std_error, rel * abs(target)) + self.bias_bound
        return abs(self.value - target) <= tol

    def to_obj(self) -> dict:
        return {
            "estimate": self.value, "se": self.std_error, "n": self.n_paths, "dt": self.dt,
            "seed": self.seed, "config_hash": self.config_hash, "bias_bound": self.bias_bound,
        }


@dataclass(frozen=True)
class ExitStats:
    mean_exit_time: float
    exit_time_se: float
    edge_frequency: np.ndarray
    edge_halfwidth: np.ndarray
    mean_vertex_occupation: float
    vertex_occupation_se: float
    n_paths: int
    delta: float
    dt: float
    capped_fraction: float = 0.0

    def to_obj(self) -> dict:
        return {
            "mean_exit_time": self.mean_exit_time, "exit_time_se": self.exit_time_se,
            "edge_frequency": self.edge_frequency.tolist(),
            "edge_wilson_halfwidth": self.edge_halfwidth.tolist(),
            "mean_vertex_occupation": self.mean_vertex_occupation,
            "vertex_occupation_se": self.vertex_occupation_se,
            "n": self.n_paths, "delta": self.delta, "dt": self.dt,
            "capped_fraction": self.capped_fraction,
        }


def config_hash(*parts: Any) -> str:
    blob = json.dumps(parts, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def mean_se(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        raise DegenerateInput("need at least two samples")
    # fsum keeps zero-variance ensembles exact
    m = math.fsum(samples) / n
    return m, math.sqrt(math.fsum((samples - m) ** 2) / (n - 1) / n)


def wilson_halfwidth(p_hat: np.ndarray, n: int, z: float = WILSON_Z) -> np.ndarray:
    p_hat = np.asarray(p_hat, dtype=float)
    return z / (1 + z * z / n) * np.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n))


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _chunk(task, payload, lo, hi, master_seed):
    return np.array([task(payload, i, stream(master_seed, i)) for i in range(lo, hi)])


def run_ensemble(task: Callable, payload: Any, n_paths: int, master_seed: int) -> np.ndarray:
    """``task(payload, index, rng)`` for every path; rows stacked in index order.

    The worker count only changes how indices are split, never which stream
    a path uses or the order of the results.
    """
    workers = n_workers()
    if workers == 1 or n_paths < 2 * workers:
        return _chunk(task, payload, 0, n_paths, master_seed)
    bounds = np.linspace(0, n_paths, workers * 4 + 1).astype(int)
    with ProcessPoolExecutor(workers) as pool:
        parts = pool.map(
            _chunk, [task] * (bounds.size - 1), [payload] * (bounds.size - 1),
            bounds[:-1], bounds[1:], [master_seed] * (bounds.size - 1),
        )
        return np.concatenate(list(parts))


# ------------------------------------------------------------- exit statistics


def _exit_task(payload, i, rng):
    g, delta, dt, t_cap, bridge = payload
    r = simulate_until_exit(g, delta, dt, rng, t_cap, bridge=bridge)
    return (r.exit_time, r.exit_edge, r.vertex_occupation, float(r.capped))


def mc_exit_stats(
    g: StarGraph,
    delta: float,
    n_paths: int,
    dt: float,
    master_seed: int,
    t_cap: float = np.inf,
    bridge: bool = True,
) -> ExitStats:
    """Ensemble statistics of the first exit from the ball of radius ``delta``
    around the vertex, starting at the vertex."""
    rows = run_ensemble(_exit_task, (g, delta, dt, t_cap, bridge), n_paths, master_seed)
    capped = rows[:, 3].astype(bool)
    frac = float(np.mean(capped))
    if frac > 0.01:
        warnings.warn(f"{frac:.1%} of exit runs hit the time cap", RuntimeWarning)
    m, se = mean_se(rows[:, 0])
    occ, occ_se = mean_se(rows[:, 2])
    counts = np.bincount(rows[:, 1].astype(int), minlength=g.n_edges + 1)[1:]
    freq = counts / n_paths
    return ExitStats(m, se, freq, wilson_halfwidth(freq, n_paths), occ, occ_se, n_paths, delta, dt, frac)


# ---------------------------------------------------------- Feynman-Kac


def _edgewise(fs, edges, xs):
    out = np.empty(xs.shape)
    for e in np.unique(edges):
        sel = edges == e
        out[sel] = fs[e - 1](xs[sel])
    return out


def discounted_integral(
    path: Path, lam: float, fs, theta: float, vertex_term: bool = True
) -> tuple[float, float]:
    """``int e^{-lam s} (f(X) 1{X != v} + theta 1{X = v}) ds`` over the knots,
    together with the largest absolute integrand value met.

    The integrand is frozen per knot interval and the exponential integrated
    exactly on each interval.
    """
    t = path.times
    w = (np.exp(-lam * t[:-1]) - np.exp(-lam * t[1:])) / lam
    plateau = path.plateau_mask()
    edges, xs = path.interval_positions()
    vals = np.zeros(w.shape)
    off = ~plateau
    vals[off] = _edgewise(fs, edges[off], xs[off])
    if vertex_term:
        vals[plateau] = theta
    return math.fsum(w * vals), float(np.max(np.abs(vals), initial=0.0))


def _fk_elliptic_task(payload, i, rng):
    g, lam, fs, theta, x0, dt, horizon, vertex_term = payload
    p = simulate_sticky(g, x0, horizon, dt, rng)
    val, peak = discounted_integral(p, lam, fs, theta, vertex_term)
    return (-val, peak)


def mc_feynman_kac_elliptic(
    g: StarGraph,
    lam: float,
    f: Any,
    theta: float,
    x0: GraphPoint,
    n_paths: int,
    dt: float,
    horizon: float,
    master_seed: int,
    *,
    vertex_term: bool = True,
) -> McEstimate:
    """Estimate ``u(x0) = -E int_0^inf e^{-lam s}(f 1{X != v} + theta 1{X = v}) ds``.

    The integral is cut at ``horizon``; ``bias_bound`` reports
    ``e^{-lam H} max|integrand| / lam`` with the maximum taken over the
    simulated paths.  ``vertex_term=False`` drops the ``theta`` contribution
    (used to show that the estimate depends on it).
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    fs = edge_functions(f, g.n_edges)
    rows = run_ensemble(
        _fk_elliptic_task, (g, lam, fs, theta, x0, dt, horizon, vertex_term), n_paths, master_seed
    )
    m, se = mean_se(rows[:, 0])
    peak = float(np.max(rows[:, 1]))
    if vertex_term:
        peak = max(peak, abs(theta)) if g.eta > 0 else peak
    bias = math.exp(-lam * horizon) * peak / lam
    h = config_hash("fk-elliptic", g.to_obj(), lam, theta, x0.edge, x0.x, dt, horizon, vertex_term)
    return McEstimate(m, se, n_paths, dt, master_seed, h, bias, rows[:, 0])


def parabolic_functional(path: Path, t0: float, f, theta, uT) -> float:
    end = path.point(len(path) - 1)
    val = float(uT[end.edge - 1](np.array(end.x)))
    if f is None and theta is None:
        return val
    dtk = np.diff(path.times)
    s = t0 + path.times[:-1]
    plateau = path.plateau_mask()
    edges, xs = path.interval_positions()
    acc = np.zeros(dtk.shape)
    if f is not None:
        off = ~plateau
        for e in np.unique(edges[off]):
            sel = off & (edges == e)
            acc[sel] = f(s[sel], int(e), xs[sel])
    if theta is not None and np.any(plateau):
        acc[plateau] = np.vectorize(theta, otypes=[float])(s[plateau])
    return val + math.fsum(acc * dtk)


def _fk_parabolic_task(payload, i, rng):
    g, T, f, theta, uT, t0, x0, dt = payload
    p = simulate_sticky(g, x0, T - t0, dt, rng)
    return (parabolic_functional(p, t0, f, theta, uT),)


def mc_feynman_kac_parabolic(
    g: StarGraph,
    T: float,
    f: Callable[[np.ndarray, int, np.ndarray], np.ndarray] | None,
    theta: Callable[[float], float] | None,
    u_T: Any,
    t0: float,
    x0: GraphPoint,
    n_paths: int,
    dt: float,
    master_seed: int,
) -> McEstimate:
    """Estimate ``E[u_T(X(T)) + int_t0^T f 1{X != v} + theta 1{X = v} ds | X(t0) = x0]``.

    ``f(t, edge, x)`` and ``theta(t)`` may be None for zero data.
    """
    if not 0 <= t0 <= T:
        raise ValueError("t0 must lie in [0, T]")
    uT = edge_functions(u_T, g.n_edges)
    h = config_hash("fk-parabolic", g.to_obj(), T, t0, x0.edge, x0.x, dt)
    if t0 == T:
        v = float(uT[x0.edge - 1](np.array(x0.x)))
        return McEstimate(v, 0.0, n_paths, dt, master_seed, h, 0.0, np.full(n_paths, v))
    rows = run_ensemble(_fk_parabolic_task, (g, T, f, theta, uT, t0, x0, dt), n_paths, master_seed)
    m, se = mean_se(rows[:, 0])
    return McEstimate(m, se, n_paths, dt, master_seed, h, 0.0, rows[:, 0])


# ------------------------------------------------------------ Ito residual


@dataclass(frozen=True)
class TestFunction:
    """``f(t, edge, x)`` with its derivatives, all vectorised over arrays."""

    value: Callable
    d_t: Callable
    d_x: Callable
    d_xx: Callable
    name: str = ""

    __test__ = False


def _per_edge(c, edges):
    return np.asarray(c, dtype=float)[np.asarray(edges) - 1]


def constant_function(c: float = 1.0) -> TestFunction:
    z = lambda t, e, x: np.zeros(np.broadcast(t, x).shape)  # noqa: E731
    return TestFunction(lambda t, e, x: np.full(np.broadcast(t, x).shape, float(c)), z, z, z, "const")


def time_function() -> TestFunction:
    z = lambda t, e, x: np.zeros(np.broadcast(t, x).shape)  # noqa: E731
    return TestFunction(
        lambda t, e, x: np.broadcast_to(t, np.broadcast(t, x).shape).astype(float),
        lambda t, e, x: np.ones(np.broadcast(t, x).shape), z, z, "time",
    )


def radial_function(c: Any = None, n_edges: int = 1) -> TestFunction:
    """``f_i(t, x) = c_i x`` (``c_i = 1`` by default)."""
    cs = np.ones(n_edges) if c is None else np.asarray(c, dtype=float)
    z = lambda t, e, x: np.zeros(np.broadcast(t, x).shape)  # noqa: E731
    return TestFunction(
        lambda t, e, x: _per_edge(cs, e) * x + 0.0 * t,
        z,
        lambda t, e, x: _per_edge(cs, e) + 0.0 * t * x,
        z,
        "radial",
    )


def exp_affine_function(c: Any) -> TestFunction:
    """``f_i(t, x) = e^{-t} (1 + c_i x)``."""
    cs = np.asarray(c, dtype=float)
    return TestFunction(
        lambda t, e, x: np.exp(-t) * (1 + _per_edge(cs, e) * x),
        lambda t, e, x: -np.exp(-t) * (1 + _per_edge(cs, e) * x),
        lambda t, e, x: np.exp(-t) * _per_edge(cs, e) + 0.0 * x,
        lambda t, e, x: np.zeros(np.broadcast(t, x).shape),
        "exp-affine",
    )


def _check_continuity(g: StarGraph, f: TestFunction, ts: np.ndarray, tol: float = 1e-12):
    edges = np.arange(1, g.n_edges + 1)
    for t in ts:
        vals = f.value(np.full(edges.shape, t), edges, np.zeros(edges.shape))
        if np.ptp(vals) > tol * max(1.0, np.max(np.abs(vals))):
            raise ContinuityError(f"test function differs across edges at the vertex (t={t}): {vals}")


def ito_residual(g: StarGraph, path: Path, f: TestFunction) -> tuple[np.ndarray, np.ndarray]:
    """Remainder ``M(t_k)`` of the Ito formula once every term but the
    stochastic integral is subtracted:

    ``f(t, X_t) - f(0, X_0) - int (d_t f + L f) 1{X != v} ds
    - int (eta d_t f(s, v) + sum_i rho_i d_x f_i(s, 0)) dell(s)``.

    Integrals use the left-point rule on knot intervals.
    """
    _check_continuity(g, f, np.unique(np.concatenate(([0.0], path.times[:: max(1, len(path) // 16)]))))
    t = path.times
    ts = t[:-1]
    dtk = np.diff(t)
    plateau = path.plateau_mask()
    edges, xs = path.interval_positions()
    sig = np.empty(xs.shape)
    drf = np.empty(xs.shape)
    for e in np.unique(edges):
        sel = edges == e
        sig[sel] = g.sigma[e - 1](xs[sel])
        drf[sel] = g.drift[e - 1](xs[sel])
    gen = f.d_t(ts, edges, xs) + 0.5 * sig**2 * f.d_xx(ts, edges, xs) + drf * f.d_x(ts, edges, xs)
    drift_part = np.where(plateau, 0.0, gen * dtk)
    zeros = np.zeros(ts.shape)
    flux = np.zeros(ts.shape)
    for i, r in enumerate(g.rho, start=1):
        flux += r * f.d_x(ts, np.full(ts.shape, i), zeros)
    junction = (g.eta * f.d_t(ts, np.ones(ts.shape, dtype=int), zeros) + flux) * np.diff(path.ell)
    fx = f.value(t, path.edges, path.xs)
    M = fx - fx[0] - np.concatenate(([0.0], np.cumsum(drift_part + junction)))
    return t, M


def convergence_slope(xs, ys) -> float:
    """Least-squares slope of ``log ys`` against ``log xs``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3 or xs.shape != ys.shape:
        raise DegenerateInput("need at least three (x, y) pairs")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DegenerateInput("values must be positive")
    if np.ptp(np.log(xs)) == 0:
        raise DegenerateInput("x values coincide")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def sticky_ensemble(g: StarGraph, x0: GraphPoint, horizon: float, dt: float, n_paths: int,
                    master_seed: int, keep_noise: bool = False):
    """Generator of sticky paths drawn from the run's per-path streams."""
    for i in range(n_paths):
        yield simulate_sticky(g, x0, horizon, dt, stream(master_seed, i), keep_noise=keep_noise,
                              seed=(master_seed, i))


__all__ = [
    "McEstimate", "ExitStats", "TestFunction", "mc_exit_stats", "mc_feynman_kac_elliptic",
    "mc_feynman_kac_parabolic", "ito_residual", "convergence_slope", "wilson_halfwidth",
    "constant_function", "time_function", "radial_function", "exp_affine_function",
    "sticky_ensemble", "run_ensemble", "VERTEX",
]
