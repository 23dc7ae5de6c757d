"""Local-time and occupation functionals of knot paths."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import _kernels
from .graph import StarGraph, lambda_const
from .paths import Path
from .timechange import truncate


def vertex_occupation(path: Path, t: float | None = None) -> float:
    """Time spent at the vertex up to ``t``: the summed plateau lengths."""
    p = path if t is None else truncate(path, t)
    dur = np.diff(p.times)[p.plateau_mask()]
    return math.fsum(dur)


def occupation_estimator(g: StarGraph, path: Path, delta: float, t: float | None = None) -> float:
    """``(Lambda / delta) * |{s <= t : 0 < x(s) <= delta}|``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    p = path if t is None else truncate(path, t)
    _, x = p.interval_positions()
    near = (x > 0.0) & (x <= delta)
    dur = np.diff(p.times)[near]
    return lambda_const(g) / delta * math.fsum(dur)


def upcrossing_estimator(path: Path, delta: float, t: float | None = None) -> float:
    """``delta`` times the number of completed passages from the vertex to level ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    t_end = path.times[-1] if t is None else t
    return delta * _kernels.count_upcrossings(path.times, path.xs, float(delta), float(t_end))


def stieltjes_integral(path: Path, f: Callable[[np.ndarray], np.ndarray], t: float | None = None) -> float:
    """``int_0^t f(s) dell(s)``, with ``f`` taken at the left end of each increment."""
    p = path if t is None else truncate(path, t)
    d_ell = np.diff(p.ell)
    grows = d_ell > 0
    if not np.any(grows):
        return 0.0
    s = p.times[:-1][grows]
    vals = np.broadcast_to(np.asarray(f(s), dtype=float), s.shape)
    return math.fsum(vals * d_ell[grows])


def vertex_integral(path: Path, f: Callable[[np.ndarray], np.ndarray], t: float | None = None) -> float:
    """``int_0^t f(s) 1{X(s) = v} ds`` with the same left-point rule."""
    p = path if t is None else truncate(path, t)
    mask = p.plateau_mask()
    if not np.any(mask):
        return 0.0
    s = p.times[:-1][mask]
    vals = np.broadcast_to(np.asarray(f(s), dtype=float), s.shape)
    return math.fsum(vals * np.diff(p.times)[mask])
