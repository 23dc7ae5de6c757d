"""Simulation of the nonsticky diffusion on a star graph.

The scheme is a reflected Euler step: propose ``y* = x + b h + sigma sqrt(h) Z``;
if ``y* < 0`` the path went through the vertex, a knot at ``x = 0`` is
inserted at the linear-bridge crossing time, a new edge is drawn from the
weights ``rho`` and the path restarts at ``-y*`` on it.  The local time grows
by the Skorokhod push of each reflection.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .graph import VERTEX, GraphPoint, StarGraph

NONSTICKY = "nonsticky"
STICKY = "sticky"


def stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible generator for path ``index`` of a run.

    Philox is counter based; the seed sequence keys each path by
    ``(master_seed, index)`` so paths can be produced in any order.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class Path:
    """Knot representation of a path on the graph.

    Vertex knots (``xs == 0``) store the local time just before any push that
    happens there; the push appears at the next knot.  Sticky paths spend
    positive time at the vertex between two consecutive vertex knots (a
    plateau) and also record, per knot, the nonsticky clock ``inner_times``.
    """

    times: np.ndarray
    edges: np.ndarray
    xs: np.ndarray
    ell: np.ndarray
    kind: str = NONSTICKY
    dt: float = float("nan")
    seed: tuple[int, int] | None = None
    graph_hash: str = ""
    eta: float = 0.0
    inner_times: np.ndarray | None = None
    noise: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.shape[0]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def is_sticky(self) -> bool:
        return self.kind == STICKY

    def point(self, k: int) -> GraphPoint:
        return GraphPoint(int(self.edges[k]), float(self.xs[k]))

    def plateau_mask(self) -> np.ndarray:
        """Per interval ``[t_k, t_k+1]``: True where the path sits at the vertex."""
        return (self.xs[:-1] == 0.0) & (self.xs[1:] == 0.0)

    def interval_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Representative ``(edge, x)`` per knot interval.

        An interval leaving a vertex knot without being a plateau belongs to
        the excursion it starts, so it takes the right end's values.
        """
        left_v = self.xs[:-1] == 0.0
        x = np.where(left_v, self.xs[1:], self.xs[:-1])
        e = np.where(left_v, self.edges[1:], self.edges[:-1])
        return e, x

    def check(self) -> None:
        """Raise ``AssertionError`` if a structural invariant is violated."""
        assert self.times.ndim == 1 and self.times.shape == self.xs.shape == self.ell.shape
        assert np.all(np.diff(self.times) > 0), "times not strictly ascending"
        assert self.ell[0] == 0.0, "ell[0] must be 0"
        assert np.all(np.diff(self.ell) >= 0), "ell decreases"
        assert np.all(self.xs >= 0), "negative radial coordinate"
        grows = np.diff(self.ell) > 0
        assert np.all(self.xs[:-1][grows] == 0.0), "ell grows away from the vertex"
        assert np.all(self.edges[self.xs == 0.0] == 1), "vertex knots not canonical"


@dataclass(frozen=True)
class ExitRecord:
    exit_time: float
    exit_edge: int
    vertex_occupation: float
    capped: bool
    nonsticky_exit_time: float = float("nan")
    local_time: float = float("nan")


def step(g: StarGraph, state: GraphPoint, dt: float, gaussian: float, uniform: float):
    """One reflected Euler step from ``state``.

    ``gaussian`` is a standard normal draw (scaled by ``sqrt(dt)`` here) and
    ``uniform`` in ``[0, 1)`` selects the edge when one is needed.  Returns
    ``(next, delta_ell, crossed, theta)``; from the vertex the edge is drawn
    first and the push, if any, belongs to the starting vertex knot, so
    ``crossed`` is False there.
    """
    sig, drf = g.packed()
    edge, x, push, crossed, theta, _ = _kernels.step(
        sig, drf, g.cum_rho, state.edge, state.x, float(dt), float(gaussian), float(uniform)
    )
    return GraphPoint(int(edge), float(x)), float(push), bool(crossed), float(theta)


def _run(g, x0, horizon, dt, gen, eta_clock, keep_noise):
    if not horizon > 0 or not dt > 0:
        raise ValueError("horizon and dt must be positive")
    sig, drf = g.packed()
    return _kernels.simulate(
        gen, sig, drf, g.cum_rho, x0.edge, x0.x, float(horizon), float(dt), float(eta_clock), keep_noise
    )


def simulate_nonsticky(
    g: StarGraph,
    x0: GraphPoint,
    horizon: float,
    dt: float,
    rng: np.random.Generator,
    *,
    keep_noise: bool = False,
    seed: tuple[int, int] | None = None,
) -> Path:
    times, edges, xs, ell, noise = _run(g, x0, horizon, dt, rng, 0.0, keep_noise)
    return Path(
        times, edges, xs, ell, NONSTICKY, dt=dt, seed=seed, graph_hash=g.fingerprint(),
        noise=noise if keep_noise else None,
    )


def simulate_sticky(
    g: StarGraph,
    x0: GraphPoint,
    horizon: float,
    dt: float,
    rng: np.random.Generator,
    *,
    keep_noise: bool = False,
    seed: tuple[int, int] | None = None,
) -> Path:
    """Sticky path on ``[0, horizon]`` with stickiness ``g.eta``.

    The nonsticky path is run until its time-changed clock covers
    ``horizon``, then time-changed and cut at ``horizon``.
    """
    from .timechange import stickify, truncate

    times, edges, xs, ell, noise = _run(g, x0, horizon, dt, rng, g.eta, keep_noise)
    base = Path(
        times, edges, xs, ell, NONSTICKY, dt=dt, seed=seed, graph_hash=g.fingerprint(),
        noise=noise if keep_noise else None,
    )
    return truncate(stickify(g, base, g.eta), horizon)


def simulate_until_exit(
    g: StarGraph,
    delta: float,
    dt: float,
    rng: np.random.Generator,
    t_cap: float = np.inf,
    x0: GraphPoint = VERTEX,
    *,
    bridge: bool = True,
) -> ExitRecord:
    """First time the sticky process reaches distance ``delta`` from the vertex.

    The nonsticky path is run to its own exit time ``T``; the sticky exit
    time is ``T + eta * ell(T)`` and the vertex occupation ``eta * ell(T)``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    sig, drf = g.packed()
    t, lt, edge, capped = _kernels.run_to_exit(
        rng, sig, drf, g.cum_rho, x0.edge, x0.x, float(delta), float(dt), g.eta, float(t_cap), bridge
    )
    return ExitRecord(
        exit_time=t + g.eta * lt,
        exit_edge=int(edge),
        vertex_occupation=g.eta * lt,
        capped=bool(capped),
        nonsticky_exit_time=t,
        local_time=lt,
    )


def with_kind(path: Path, kind: str, **changes) -> Path:
    return replace(path, kind=kind, **changes)
