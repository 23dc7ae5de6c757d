"""Static star-graph model: geometry, metric and coefficients.

Edges are numbered ``1..N``.  A point is a pair ``(edge, x)`` with ``x >= 0``
its distance to the vertex; all points with ``x == 0`` are the same point, the
vertex, and are stored with ``edge == 1``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import BadTableError, ConfigError, EllipticityError, RhoSumError

RHO_TOL = 1e-12
VALIDATION_POINTS = 4001

KIND_CONSTANT = 0
KIND_AFFINE = 1
KIND_TABULATED = 2
_KIND_CODES = {"constant": KIND_CONSTANT, "affine": KIND_AFFINE, "tabulated": KIND_TABULATED}


@dataclass(frozen=True)
class CoefficientSpec:
    """A scalar function on the half-line.

    ``constant`` uses ``a0``; ``affine`` is ``a0 + a1 * x``; ``tabulated``
    interpolates linearly between ``(xs[k], values[k])`` and is held constant
    outside the table.
    """

    kind: str
    a0: float = 0.0
    a1: float = 0.0
    xs: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ConfigError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "tabulated":
            xs = np.asarray(self.xs, dtype=float)
            if xs.size < 2 or xs.size != len(self.values):
                raise BadTableError("tabulated coefficient needs >= 2 nodes and matching values")
            if np.any(np.diff(xs) <= 0):
                raise BadTableError(f"table grid is not strictly ascending: {self.xs}")
            if xs[0] < 0:
                raise BadTableError("table grid must lie in [0, inf)")
            if not np.all(np.isfinite(self.values)):
                raise BadTableError("table values must be finite")

    @classmethod
    def constant(cls, c: float) -> "CoefficientSpec":
        return cls("constant", a0=float(c))

    @classmethod
    def affine(cls, a0: float, a1: float) -> "CoefficientSpec":
        return cls("affine", a0=float(a0), a1=float(a1))

    @classmethod
    def tabulated(cls, xs: Sequence[float], values: Sequence[float]) -> "CoefficientSpec":
        return cls("tabulated", xs=tuple(float(v) for v in xs), values=tuple(float(v) for v in values))

    @classmethod
    def from_obj(cls, obj: Any) -> "CoefficientSpec":
        """Parse a config entry: a number, or a dict with a ``kind`` key."""
        if isinstance(obj, CoefficientSpec):
            return obj
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls.constant(obj)
        if not isinstance(obj, Mapping) or "kind" not in obj:
            raise ConfigError(f"cannot parse coefficient {obj!r}")
        kind = obj["kind"]
        allowed = {
            "constant": {"kind", "value"},
            "affine": {"kind", "a0", "a1"},
            "tabulated": {"kind", "x", "v"},
        }.get(kind)
        if allowed is None:
            raise ConfigError(f"unknown coefficient kind {kind!r}")
        extra = set(obj) - allowed
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)} in {kind} coefficient")
        try:
            if kind == "constant":
                return cls.constant(obj["value"])
            if kind == "affine":
                return cls.affine(obj["a0"], obj["a1"])
            return cls.tabulated(obj["x"], obj["v"])
        except KeyError as exc:
            raise ConfigError(f"{kind} coefficient is missing {exc}") from None

    def to_obj(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.a0}
        if self.kind == "affine":
            return {"kind": "affine", "a0": self.a0, "a1": self.a1}
        return {"kind": "tabulated", "x": list(self.xs), "v": list(self.values)}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.full_like(x, self.a0)
        elif self.kind == "affine":
            out = self.a0 + self.a1 * x
        else:
            out = np.interp(x, self.xs, self.values)
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        """Piecewise derivative (right derivative at table nodes)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.zeros_like(x)
        elif self.kind == "affine":
            out = np.full_like(x, self.a1)
        else:
            xs = np.asarray(self.xs)
            slopes = np.diff(self.values) / np.diff(xs)
            k = np.searchsorted(xs, x, side="right") - 1
            inside = (k >= 0) & (k < slopes.size)
            out = np.where(inside, slopes[np.clip(k, 0, slopes.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "affine" and self.a1 == 0.0)

    def extent(self) -> float:
        """Right end of the region where the function is not trivially extrapolated."""
        return self.xs[-1] if self.kind == "tabulated" else 0.0


@dataclass(frozen=True)
class GraphPoint:
    edge: int
    x: float

    def __post_init__(self):
        if self.x < 0 or not math.isfinite(self.x):
            raise ValueError(f"radial coordinate must be finite and >= 0, got {self.x}")
        if self.edge < 1:
            raise ValueError(f"edges are numbered from 1, got {self.edge}")
        if self.x == 0.0 and self.edge != 1:
            object.__setattr__(self, "edge", 1)
        object.__setattr__(self, "x", float(self.x))

    @property
    def is_vertex(self) -> bool:
        return self.x == 0.0


VERTEX = GraphPoint(1, 0.0)


@dataclass(frozen=True)
class StarGraph:
    """N half-lines glued at one vertex.

    ``sigma`` and ``drift`` hold one :class:`CoefficientSpec` per edge, ``rho``
    the edge-selection weights and ``eta`` the stickiness of the vertex.
    """

    n_edges: int
    sigma: tuple[CoefficientSpec, ...]
    drift: tuple[CoefficientSpec, ...]
    rho: tuple[float, ...]
    eta: float = 0.0
    sigma_floor: float = 1e-3
    check_extent: float = 10.0
    _packed: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_edges
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ConfigError(f"n_edges must be a positive integer, got {n!r}")
        for name in ("sigma", "drift", "rho"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        rho = np.asarray(self.rho, dtype=float)
        if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
            raise RhoSumError(f"weights must be positive, got {self.rho}")
        if abs(rho.sum() - 1.0) > RHO_TOL:
            raise RhoSumError(f"weights sum to {float(rho.sum())!r}, expected 1")
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ConfigError(f"stickiness must be finite and >= 0, got {self.eta}")
        if not self.sigma_floor > 0:
            raise ConfigError("sigma_floor must be positive")
        grid = self.validation_grid()
        for i, s in enumerate(self.sigma, start=1):
            low = np.min(s(grid))
            if low < self.sigma_floor:
                raise EllipticityError(
                    f"sigma on edge {i} drops to {low:.6g} < sigma_floor={self.sigma_floor:g}"
                )
        object.__setattr__(self, "rho", tuple(float(r) for r in rho))

    def validation_grid(self) -> np.ndarray:
        extent = max([self.check_extent] + [2.0 * c.extent() for c in (*self.sigma, *self.drift)])
        knots = [c.xs for c in self.sigma if c.kind == "tabulated"]
        grid = np.linspace(0.0, extent, VALIDATION_POINTS)
        return np.unique(np.concatenate([grid, *[np.asarray(k) for k in knots]]))

    def coefficients(self, p: GraphPoint) -> tuple[float, float]:
        return eval_coefficients(self, p)

    @property
    def cum_rho(self) -> np.ndarray:
        c = np.cumsum(self.rho)
        c[-1] = 1.0
        return c

    def draw_edge(self, uniform: float) -> int:
        """Categorical inversion: first edge whose cumulative weight exceeds ``uniform``."""
        return int(np.searchsorted(self.cum_rho, uniform, side="right")) + 1

    def with_eta(self, eta: float) -> "StarGraph":
        return StarGraph(self.n_edges, self.sigma, self.drift, self.rho, eta, self.sigma_floor,
                         self.check_extent)

    def to_obj(self) -> dict:
        return {
            "n_edges": self.n_edges,
            "rho": list(self.rho),
            "eta": self.eta,
            "sigma": [c.to_obj() for c in self.sigma],
            "drift": [c.to_obj() for c in self.drift],
            "sigma_floor": self.sigma_floor,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_obj(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def packed(self):
        """Coefficient tables in the flat layout the compiled kernels read."""
        if self._packed is None:
            object.__setattr__(self, "_packed", (_pack(self.sigma), _pack(self.drift)))
        return self._packed


def _pack(specs: Sequence[CoefficientSpec]) -> np.ndarray:
    """One row per edge: ``[kind, a0, a1, n, x_0 .. x_{n-1}, v_0 .. v_{n-1}]``."""
    width = max([0] + [len(c.xs) for c in specs])
    table = np.zeros((len(specs), 4 + 2 * width))
    for i, c in enumerate(specs):
        table[i, :3] = (_KIND_CODES[c.kind], c.a0, c.a1)
        if c.kind == "tabulated":
            k = len(c.xs)
            table[i, 3] = k
            table[i, 4 : 4 + k] = c.xs
            table[i, 4 + k : 4 + 2 * k] = c.values
    return table


def _broadcast(obj: Any, n: int, name: str) -> tuple[CoefficientSpec, ...]:
    if isinstance(obj, (list, tuple)):
        if len(obj) != n:
            raise ConfigError(f"{name} lists {len(obj)} edges, expected {n}")
        return tuple(CoefficientSpec.from_obj(o) for o in obj)
    spec = CoefficientSpec.from_obj(obj)
    return (spec,) * n


GRAPH_KEYS = {"n_edges", "rho", "eta", "sigma", "drift", "sigma_floor", "check_extent"}


def build_graph(description: Mapping[str, Any]) -> StarGraph:
    """Validate a raw (config-file) description and return a :class:`StarGraph`.

    ``sigma`` and ``drift`` accept a single coefficient (shared by all edges)
    or one entry per edge; ``rho`` defaults to uniform weights.
    """
    extra = set(description) - GRAPH_KEYS
    if extra:
        raise ConfigError(f"unknown graph keys {sorted(extra)}")
    try:
        n = description["n_edges"]
    except KeyError:
        raise ConfigError("graph needs n_edges") from None
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"n_edges must be a positive integer, got {n!r}")
    rho = description.get("rho", [1.0 / n] * n)
    if len(rho) != n:
        raise ConfigError(f"rho has {len(rho)} entries, expected {n}")
    return StarGraph(
        n_edges=n,
        sigma=_broadcast(description.get("sigma", 1.0), n, "sigma"),
        drift=_broadcast(description.get("drift", 0.0), n, "drift"),
        rho=tuple(float(r) for r in rho),
        eta=float(description.get("eta", 0.0)),
        sigma_floor=float(description.get("sigma_floor", 1e-3)),
        check_extent=float(description.get("check_extent", 10.0)),
    )


def distance(g: StarGraph, p: GraphPoint, q: GraphPoint) -> float:
    if p.edge == q.edge:
        return abs(p.x - q.x)
    return p.x + q.x


def eval_coefficients(g: StarGraph, p: GraphPoint) -> tuple[float, float]:
    """``(sigma, drift)`` at ``p``.  At the vertex, edge 1's limits are returned."""
    i = p.edge - 1
    return g.sigma[i](p.x), g.drift[i](p.x)


def lambda_const(g: StarGraph) -> float:
    """Normalisation linking near-vertex occupation density to local time."""
    s0 = np.array([s(0.0) for s in g.sigma])
    return 1.0 / float(np.sum(2.0 * np.asarray(g.rho) / s0**2))
