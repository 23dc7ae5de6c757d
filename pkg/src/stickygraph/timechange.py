"""The Ito-McKean clock ``V(s) = s + eta * ell(s)`` and its right inverse."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BeyondHorizon, KindError, NumericsError
from .graph import GraphPoint, StarGraph
from .paths import NONSTICKY, STICKY, Path


@dataclass(frozen=True, eq=False)
class TimeChangeMap:
    """Pure-jump-plus-slope-one clock built on the knots of a nonsticky path.

    ``before[k]`` is ``V(s_k-)`` and ``after[k]`` is ``V(s_k)``; they differ
    only at knots where the local time jumps.
    """

    knots: np.ndarray
    before: np.ndarray
    after: np.ndarray
    eta: float

    @property
    def values(self) -> np.ndarray:
        return self.before

    @property
    def jumps(self) -> np.ndarray:
        return np.flatnonzero(self.after > self.before)

    @property
    def max_value(self) -> float:
        return float(self.after[-1])

    def __call__(self, s):
        """``V(s)`` for ``0 <= s <= last knot`` (right-continuous)."""
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(self.knots, s, side="right") - 1, 0, None)
        out = s + (self.after[k] - self.knots[k])
        return float(out) if out.ndim == 0 else out

    def inverse(self, t):
        return apply_inverse(self, t)


def _local_time_after(path: Path) -> np.ndarray:
    # ell is constant away from vertex knots, so the value after a knot is the next one.
    return np.append(path.ell[1:], path.ell[-1])


def build_time_change(path: Path, eta: float) -> TimeChangeMap:
    if path.kind != NONSTICKY:
        raise KindError("the clock is built from a nonsticky path")
    if not eta >= 0:
        raise ValueError("eta must be >= 0")
    s = path.times
    return TimeChangeMap(s, s + eta * path.ell, s + eta * _local_time_after(path), float(eta))


def apply_inverse(vmap: TimeChangeMap, t):
    """``inf {s >= 0 : V(s) > t}``: flat across every jump gap of ``V``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    if np.any(t > vmap.max_value):
        raise BeyondHorizon(f"t exceeds the clock range {vmap.max_value}")
    k = np.searchsorted(vmap.after, t, side="right") - 1
    last = vmap.knots.shape[0] - 1
    nxt = np.clip(k + 1, 0, last)
    kk = np.clip(k, 0, last)
    # inside the gap [before[k+1], after[k+1]) the inverse sits at knot k+1
    in_gap = (k < 0) | ((k < last) & (t >= vmap.before[nxt]))
    slope_piece = t - (vmap.after[kk] - vmap.knots[kk])
    out = np.where(in_gap, vmap.knots[nxt], slope_piece)
    return float(out) if out.ndim == 0 else out


def stickify(g: StarGraph | None, path: Path, eta: float) -> Path:
    """Time-change a nonsticky path into a sticky one.

    Each local-time jump ``d`` at a vertex knot opens a plateau of length
    ``eta * d`` during which the path stays at the vertex and its local time
    grows linearly.
    """
    if path.kind != NONSTICKY:
        raise KindError("stickify expects a nonsticky path")
    if eta == 0.0:
        return replace(path, kind=STICKY, eta=0.0, inner_times=path.times.copy())
    vmap = build_time_change(path, eta)
    la = _local_time_after(path)
    opens = np.flatnonzero(vmap.after > vmap.before)
    at = opens + 1
    times = np.insert(vmap.before, at, vmap.after[opens])
    if not np.all(np.diff(times) > 0):
        raise NumericsError("time change produced non-increasing knot times")
    noise = None if path.noise is None else np.insert(path.noise, at, 0.0)
    return replace(
        path,
        times=times,
        edges=np.insert(path.edges, at, 1),
        xs=np.insert(path.xs, at, 0.0),
        ell=np.insert(path.ell, at, la[opens]),
        kind=STICKY,
        eta=float(eta),
        inner_times=np.insert(path.times, at, path.times[opens]),
        noise=noise,
    )


def plateau_ends(path: Path) -> np.ndarray:
    """Indices of knots that close a vertex plateau."""
    return np.flatnonzero(path.plateau_mask()) + 1


def inner_clock(path: Path) -> np.ndarray:
    """``R(t) = time spent away from the vertex``, evaluated at the knots."""
    dur = np.where(path.plateau_mask(), np.diff(path.times), 0.0)
    return path.times - np.concatenate(([0.0], np.cumsum(dur)))


def destickify(path: Path) -> Path:
    """Delete the vertex plateaus of a sticky path, keeping its local time as jumps."""
    if path.kind != STICKY:
        raise KindError("destickify expects a sticky path")
    drop = plateau_ends(path)
    keep = np.ones(len(path), dtype=bool)
    keep[drop] = False
    clock = path.inner_times if path.inner_times is not None else inner_clock(path)
    return replace(
        path,
        times=clock[keep],
        edges=path.edges[keep],
        xs=path.xs[keep],
        ell=path.ell[keep],
        kind=NONSTICKY,
        eta=0.0,
        inner_times=None,
        noise=None if path.noise is None else path.noise[keep],
    )


def _state_after(path: Path, k: int, t: float):
    """Interpolated knot ``(edge, x, ell, inner)`` at time ``t`` in ``(t_k, t_k+1)``."""
    t0, t1 = path.times[k], path.times[k + 1]
    inner = None if path.inner_times is None else path.inner_times[k]
    if path.xs[k] == 0.0 and path.xs[k + 1] == 0.0:
        w = (t - t0) / (t1 - t0)
        return 1, 0.0, path.ell[k] + w * (path.ell[k + 1] - path.ell[k]), inner
    if inner is not None:
        inner = inner + (t - t0)
    j = k + 1 if path.xs[k] == 0.0 else k
    return path.edges[j], path.xs[j], path.ell[j], inner


def truncate(path: Path, t: float) -> Path:
    """Restriction of ``path`` to ``[0, t]``, closing with a knot at ``t``."""
    if t >= path.times[-1]:
        return path
    k = int(np.searchsorted(path.times, t, side="right")) - 1
    if k < 0:
        raise ValueError("t precedes the path")
    if path.times[k] == t:
        m = k + 1
        cut = lambda a: None if a is None else a[:m]  # noqa: E731
        return replace(path, times=path.times[:m], edges=path.edges[:m], xs=path.xs[:m],
                       ell=path.ell[:m], inner_times=cut(path.inner_times), noise=cut(path.noise))
    edge, x, ell, inner = _state_after(path, k, t)
    m = k + 1
    app = lambda a, v: None if a is None else np.append(a[:m], v)  # noqa: E731
    return replace(
        path,
        times=np.append(path.times[:m], t),
        edges=np.append(path.edges[:m], edge),
        xs=np.append(path.xs[:m], x),
        ell=np.append(path.ell[:m], ell),
        inner_times=app(path.inner_times, inner),
        noise=app(path.noise, 0.0),
    )


def state_at(path: Path, t: float) -> tuple[GraphPoint, float]:
    """Position and local time at ``t`` (knot values frozen between knots)."""
    if t > path.times[-1] or t < 0:
        raise BeyondHorizon(f"t={t} outside [0, {path.times[-1]}]")
    k = int(np.searchsorted(path.times, t, side="right")) - 1
    if path.times[k] == t or k == len(path) - 1:
        return path.point(k), float(path.ell[k])
    edge, x, ell, _ = _state_after(path, k, t)
    return GraphPoint(int(edge), float(x)), float(ell)
