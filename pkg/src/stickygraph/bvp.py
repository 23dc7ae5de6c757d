"""Deterministic oracles: the vertex-ball boundary value problem in closed
form, and finite-difference solvers for the resolvent and backward heat
equations with a (dynamic) junction condition at the vertex.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import QuadratureError, SingularSystem, TruncationWarning
from .graph import CoefficientSpec, StarGraph

EdgeFunction = Callable[[np.ndarray], np.ndarray]


def edge_functions(f: Any, n: int) -> list[EdgeFunction]:
    """Normalise ``f`` into one vectorised callable per edge.

    Accepts a number, a :class:`CoefficientSpec` or config dict, a single
    callable ``f(x)`` shared by all edges, or a sequence of any of these.
    """
    if isinstance(f, (list, tuple)):
        if len(f) != n:
            raise ValueError(f"expected {n} edge functions, got {len(f)}")
        return [edge_functions(fi, 1)[0] for fi in f]
    if callable(f) and not isinstance(f, CoefficientSpec):
        fn = f
    else:
        fn = CoefficientSpec.from_obj(f)

    def wrapped(x, fn=fn):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).astype(float)

    return [wrapped] * n


def _vertex_value(fs: Sequence[EdgeFunction], name: str, tol: float = 1e-12) -> float:
    v = np.array([float(fi(np.array(0.0))) for fi in fs])
    if np.ptp(v) > tol * max(1.0, np.max(np.abs(v))):
        raise ValueError(f"{name} takes different values at the vertex: {v}")
    return float(v[0])


# ---------------------------------------------------------------- ball problem


@dataclass(frozen=True, eq=False)
class BvpSolution:
    """Closed-form solution of ``L_i u_i = f_i`` on ``[0, delta]`` with
    ``u_i(delta) = 0``, continuity at the vertex and
    ``eta L u(v) = sum_i rho_i u_i'(0)``.

    Tables are sampled on the uniform quadrature grid ``y``; ``alpha``,
    ``beta`` are the two auxiliary integrals, ``du`` the exact derivative
    ``(A_i + G_i) E_i``.
    """

    delta: float
    y: np.ndarray
    A: np.ndarray
    kappa: np.ndarray
    kappa_mismatch: float
    alpha: np.ndarray
    beta: np.ndarray
    G: np.ndarray
    E: np.ndarray
    u_table: np.ndarray
    du_table: np.ndarray
    quadrature_error: float

    @property
    def n_edges(self) -> int:
        return self.A.shape[0]

    @property
    def u0(self) -> float:
        return float(self.u_table[0, 0])

    def _spline(self, edge: int) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.y, self.u_table[edge - 1], self.du_table[edge - 1])

    def u(self, edge: int, x):
        return self._spline(edge)(x)

    def du(self, edge: int, x):
        return self._spline(edge)(x, 1)

    def d2u(self, edge: int, x):
        return self._spline(edge)(x, 2)


def _tables(g: StarGraph, i: int, y: np.ndarray, fi: np.ndarray):
    s2 = g.sigma[i](y) ** 2
    b = g.drift[i](y)
    B = cumulative_simpson(2.0 * b / s2, x=y, initial=0.0)
    E = np.exp(-B)
    G = cumulative_simpson(2.0 * fi / s2 * np.exp(B), x=y, initial=0.0)
    cE = cumulative_simpson(E, x=y, initial=0.0)
    cGE = cumulative_simpson(G * E, x=y, initial=0.0)
    return cE[-1] - cE, cGE[-1] - cGE, G, E


def _ball_constants(g: StarGraph, fv: float, a0: np.ndarray, b0: np.ndarray):
    rho = np.asarray(g.rho)
    eta = g.eta
    shift = np.sum(rho * (b0[0] - b0) / a0)
    weight = np.sum(rho / a0)
    kappa = (eta * fv - shift) / weight + b0[0] - b0
    a1 = (eta * fv - shift) / np.sum(rho * a0[0] / a0)
    A = (a1 * a0[0] + b0[0] - b0) / a0
    mismatch = float(np.max(np.abs(kappa - A * a0)))
    return A, kappa, mismatch


def solve_ball_bvp(
    g: StarGraph, delta: float, f: Any, quad_nodes: int = 2049, tol: float = 1e-8
) -> BvpSolution:
    """Solve the vertex-ball problem of radius ``delta`` by quadrature.

    ``f`` gives the right-hand side per edge (see :func:`edge_functions`); its
    edge values at the vertex must agree.  Raises :class:`QuadratureError`
    when halving the grid moves ``u(v)`` by more than ``tol`` (relative to
    ``max(1, |u(v)|)``).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if quad_nodes < 5 or quad_nodes % 2 == 0:
        raise ValueError("quad_nodes must be odd and >= 5")
    n = g.n_edges
    fs = edge_functions(f, n)
    fv = _vertex_value(fs, "f")

    def solve(m):
        y = np.linspace(0.0, delta, m)
        tabs = [_tables(g, i, y, fs[i](y)) for i in range(n)]
        alpha = np.array([t[0] for t in tabs])
        beta = np.array([t[1] for t in tabs])
        A, kappa, mismatch = _ball_constants(g, fv, alpha[:, 0], beta[:, 0])
        return y, alpha, beta, np.array([t[2] for t in tabs]), np.array([t[3] for t in tabs]), A, kappa, mismatch

    y, alpha, beta, G, E, A, kappa, mismatch = solve(quad_nodes)
    u = -kappa[:, None] * alpha / alpha[:, :1] - beta
    coarse = solve((quad_nodes + 1) // 2)
    u0_coarse = -coarse[6][0] - coarse[2][0, 0]
    qerr = abs(u[0, 0] - u0_coarse)
    if qerr > tol * max(1.0, abs(u[0, 0])):
        raise QuadratureError(
            f"u(v) changes by {qerr:.3g} when halving the grid; increase quad_nodes"
        )
    du = (A[:, None] + G) * E
    return BvpSolution(float(delta), y, A, kappa, mismatch, alpha, beta, G, E, u, du, qerr)


@dataclass(frozen=True)
class BvpResidual:
    max_ode_residual: float
    junction_residual: float
    dirichlet_residual: float
    max_u2: float
    continuity_residual: float = 0.0


def _second_derivative(du: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order differentiation of the tabulated ``u'`` along the last axis."""
    d = np.empty_like(du)
    d[..., 2:-2] = (du[..., :-4] - 8 * du[..., 1:-3] + 8 * du[..., 3:-1] - du[..., 4:]) / (12 * h)
    c = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[..., 0] = du[..., 0:5] @ c
    d[..., 1] = du[..., 1:6] @ c
    d[..., -1] = -(du[..., -1:-6:-1] @ c)
    d[..., -2] = -(du[..., -2:-7:-1] @ c)
    return d


def bvp_residual(g: StarGraph, sol: BvpSolution, f: Any, check_nodes: int = 257) -> BvpResidual:
    """Residuals of the four defining conditions and ``max |u''|``.

    ``u''`` is obtained by differentiating the closed-form ``u'`` table
    numerically, so the ODE residual measures the quadrature, not an
    identity.
    """
    n = g.n_edges
    fs = edge_functions(f, n)
    y = sol.y
    h = y[1] - y[0]
    u2 = _second_derivative(sol.du_table, h)
    idx = np.unique(np.round(np.linspace(0, y.size - 1, check_nodes)).astype(int))
    ode = 0.0
    max_u2 = 0.0
    lu_v = np.empty(n)
    for i in range(n):
        x = y[idx]
        s2 = g.sigma[i](x) ** 2
        b = g.drift[i](x)
        r = 0.5 * s2 * u2[i, idx] + b * sol.du_table[i, idx] - fs[i](x)
        ode = max(ode, float(np.max(np.abs(r))))
        max_u2 = max(max_u2, float(np.max(np.abs(u2[i, idx]))))
        lu_v[i] = 0.5 * g.sigma[i](0.0) ** 2 * u2[i, 0] + g.drift[i](0.0) * sol.A[i]
    junction = abs(g.eta * float(np.mean(lu_v)) - float(np.dot(g.rho, sol.A)))
    dirichlet = float(np.max(np.abs(sol.u_table[:, -1])))
    continuity = float(np.ptp(sol.u_table[:, 0]))
    return BvpResidual(ode, junction, dirichlet, max_u2, continuity)


# ------------------------------------------------------------ grid solvers


@dataclass(frozen=True, eq=False)
class GridSolution:
    """Nodal values on ``N`` copies of the mesh ``x``; column 0 is the vertex.

    Elliptic solutions have ``values.shape == (N, m)``; parabolic ones carry
    ``times`` (ascending) and ``values.shape == (len(times), N, m)``.
    """

    x: np.ndarray
    values: np.ndarray
    times: np.ndarray | None = None
    truncation_bound: float = 0.0

    def at(self, edge: int, x: float, level: int | None = None) -> float:
        v = self.values if self.times is None else self.values[0 if level is None else level]
        return float(np.interp(x, self.x, v[edge - 1]))

    def vertex(self, level: int | None = None) -> float:
        v = self.values if self.times is None else self.values[0 if level is None else level]
        return float(v[0, 0])


def _mesh(R: float, m: int):
    if m < 4:
        raise ValueError("mesh needs at least 4 nodes per edge")
    if not R > 0:
        raise ValueError("truncation radius must be positive")
    x = np.linspace(0.0, R, m)
    return x, x[1] - x[0]


def _generator_matrix(g: StarGraph, x: np.ndarray, h: float):
    """Sparse ``L`` on interior nodes plus the vertex flux row.

    Row/column 0 is the vertex; edge ``i`` interior node ``j`` maps to
    ``1 + i (m - 2) + j - 1``.  Returns ``(K, bcoef)`` where ``bcoef[i]`` is
    the coefficient multiplying the Dirichlet value of edge ``i`` in the row
    of the last interior node.
    """
    n, m = g.n_edges, x.size
    k = m - 2
    size = 1 + n * k
    rows, cols, vals = [], [], []
    rho = np.asarray(g.rho)
    bcoef = np.empty(n)
    xi = x[1:-1]
    for i in range(n):
        a = 0.5 * g.sigma[i](xi) ** 2 / h**2
        c = g.drift[i](xi) / (2 * h)
        base = 1 + i * k
        idx = base + np.arange(k)
        rows += [idx, idx[1:], idx[:-1]]
        cols += [idx, idx[1:] - 1, idx[:-1] + 1]
        vals += [-2 * a, (a - c)[1:], (a + c)[:-1]]
        rows.append(np.array([base]))
        cols.append(np.array([0]))
        vals.append(np.array([(a - c)[0]]))
        bcoef[i] = (a + c)[-1]
        # one-sided second-order derivative at the vertex
        rows.append(np.array([0, 0, 0]))
        cols.append(np.array([0, base, base + 1]))
        vals.append(rho[i] * np.array([-3.0, 4.0, -1.0]) / (2 * h))
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return K, bcoef


def _solve(M, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            out = spla.spsolve(M.tocsc(), rhs)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SingularSystem(str(exc)) from None
    if not np.all(np.isfinite(out)):
        raise SingularSystem("non-finite solution")
    return out


def _unpack(U, far, n, m):
    vals = np.empty((n, m))
    vals[:, 0] = U[0]
    vals[:, 1:-1] = U[1:].reshape(n, m - 2)
    vals[:, -1] = far
    return vals


def solve_elliptic(
    g: StarGraph,
    lam: float,
    f: Any,
    theta: float,
    truncation_R: float = 10.0,
    mesh_m: int = 401,
) -> GridSolution:
    """Finite differences for ``L u - lam u = f`` off the vertex with
    ``sum_i rho_i u_i'(0) - eta lam u(v) = eta theta``.

    Edges are cut at ``truncation_R`` where ``u_i = -f_i(R) / lam`` is
    imposed (the value of the solution wherever ``f`` is locally affine and
    the drift vanishes).
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    n = g.n_edges
    fs = edge_functions(f, n)
    x, h = _mesh(truncation_R, mesh_m)
    K, bcoef = _generator_matrix(g, x, h)
    size = K.shape[0]
    m = mesh_m
    far = np.array([-float(fs[i](np.array(truncation_R))) / lam for i in range(n)])
    rhs = np.empty(size)
    rhs[0] = g.eta * theta
    for i in range(n):
        seg = slice(1 + i * (m - 2), 1 + (i + 1) * (m - 2))
        rhs[seg] = fs[i](x[1:-1])
        rhs[seg.stop - 1] -= bcoef[i] * far[i]
    shift = np.full(size, lam)
    shift[0] = g.eta * lam
    U = _solve(K - sp.diags(shift), rhs)
    smax = max(float(np.max(s(x))) for s in g.sigma)
    bound = math.exp(-math.sqrt(2 * lam) / smax * truncation_R)
    if bound > 1e-6:
        warnings.warn(f"truncation at R={truncation_R} leaves decay factor {bound:.2g}", TruncationWarning)
    return GridSolution(x, _unpack(U, far, n, m), truncation_bound=bound)


def solve_parabolic(
    g: StarGraph,
    T: float,
    f: Callable[[float, int, np.ndarray], np.ndarray] | None,
    theta: Callable[[float], float] | None,
    u_T: Any,
    truncation_R: float = 6.0,
    mesh_m: int = 400,
    time_steps: int = 400,
    startup_steps: int = 2,
) -> GridSolution:
    """Crank-Nicolson, backward from ``T``, for
    ``-u_t - L u = f`` off the vertex with the dynamic junction
    ``-eta u_t(v) - sum_i rho_i u_i'(0) = eta theta(t)`` and ``u(T) = u_T``.

    ``f(t, edge, x)`` and ``theta(t)`` may be None for zero data.  The first
    step is split into ``startup_steps`` implicit Euler substeps to damp the
    start-up oscillation caused by terminal data that violate the junction
    condition.  For ``eta == 0`` the junction row is algebraic and is imposed
    implicitly at every level.
    """
    n, m = g.n_edges, mesh_m
    x, h = _mesh(truncation_R, mesh_m)
    K, bcoef = _generator_matrix(g, x, h)
    size = K.shape[0]
    uT = edge_functions(u_T, n)
    _vertex_value(uT, "u_T", tol=1e-9)
    zero_f = f is None
    zero_theta = theta is None

    def forcing(t):
        F = np.zeros(size)
        if not zero_theta:
            F[0] = g.eta * theta(t)
        if not zero_f:
            for i in range(n):
                F[1 + i * (m - 2): 1 + (i + 1) * (m - 2)] = f(t, i + 1, x[1:-1])
        return F

    def far_f(t):
        if zero_f:
            return np.zeros(n)
        return np.array([float(f(t, i + 1, np.array([truncation_R]))[0]) for i in range(n)])

    last_rows = np.array([(i + 1) * (m - 2) for i in range(n)])
    mass = np.ones(size)
    mass[0] = g.eta
    algebraic = mass == 0.0
    M = sp.diags(mass)

    U = np.empty(size)
    U[0] = float(uT[0](np.array(0.0)))
    for i in range(n):
        U[1 + i * (m - 2): 1 + (i + 1) * (m - 2)] = uT[i](x[1:-1])
    far = np.array([float(uT[i](np.array(truncation_R))) for i in range(n)])

    def boundary_rhs(far_vals):
        B = np.zeros(size)
        B[last_rows] = bcoef * far_vals
        return B

    def advance(U, t_now, dtau, weight, far_now):
        t_new = t_now - dtau
        far_new = far_now + 0.5 * dtau * (far_f(t_now) + far_f(t_new))
        w = np.where(algebraic, 1.0, weight)
        W = sp.diags(w)
        lhs = M - dtau * (W @ K)
        F_new = forcing(t_new) + boundary_rhs(far_new)
        F_old = forcing(t_now) + boundary_rhs(far_now)
        rhs = M @ U + dtau * ((1 - w) * (K @ U)) + dtau * (w * F_new + (1 - w) * F_old)
        return _solve(lhs, rhs), t_new, far_new

    dtau = T / time_steps
    levels = [_unpack(U, far, n, m)]
    t_now = T
    for k in range(time_steps):
        if k == 0 and startup_steps > 0:
            for _ in range(startup_steps):
                U, t_now, far = advance(U, t_now, dtau / startup_steps, 1.0, far)
        else:
            U, t_now, far = advance(U, t_now, dtau, 0.5, far)
        levels.append(_unpack(U, far, n, m))
    times = T - dtau * np.arange(time_steps + 1)
    times[-1] = 0.0
    return GridSolution(x, np.array(levels[::-1]), times=times[::-1])
