"""Compiled inner loops for the reflected Euler scheme.

Edges are 1-based everywhere except when indexing the packed coefficient
tables.  Every grid step consumes one normal and one uniform draw, in that
order; the exit kernel consumes a second uniform for the Brownian-bridge test
at the outer boundary.
"""

import math

import numpy as np
from numba import njit

CONSTANT, AFFINE, TABULATED = 0, 1, 2


@njit(cache=True, inline="always")
def _interp(table, i, x):
    n = int(table[i, 3])
    if x <= table[i, 4]:
        return table[i, 4 + n]
    if x >= table[i, 3 + n]:
        return table[i, 3 + 2 * n]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if table[i, 4 + mid] <= x:
            lo = mid
        else:
            hi = mid
    x0, x1 = table[i, 4 + lo], table[i, 4 + hi]
    v0, v1 = table[i, 4 + n + lo], table[i, 4 + n + hi]
    return v0 + (x - x0) / (x1 - x0) * (v1 - v0)


@njit(cache=True, inline="always")
def coef(table, i, x):
    """Coefficient of edge ``i`` (0-based) at ``x``; see ``graph._pack`` for the row layout."""
    kind = table[i, 0]
    if kind == CONSTANT:
        return table[i, 1]
    if kind == AFFINE:
        return table[i, 1] + table[i, 2] * x
    return _interp(table, i, x)


@njit(cache=True, inline="always")
def draw_edge(cum_rho, u):
    n = cum_rho.shape[0]
    for k in range(n):
        if u < cum_rho[k]:
            return k + 1
    return n


@njit(cache=True, inline="always")
def step(sig, drf, cum_rho, edge, x, h, gauss, unif):
    """One reflected Euler step.

    Returns ``(edge, x, push, crossed, theta, noise)``.  ``push`` is the
    Skorokhod increment ``x_next - y*``; with mirror reflection it equals
    ``2 * max(-y*, 0)``.  ``crossed`` flags an interior start that went
    through the vertex, in which case ``theta`` locates the crossing.
    """
    if x == 0.0:
        edge = draw_edge(cum_rho, unif)
        s = coef(sig, edge - 1, 0.0)
        noise = s * math.sqrt(h) * gauss
        ystar = coef(drf, edge - 1, 0.0) * h + noise
        nxt = abs(ystar)
        return edge, nxt, nxt - ystar, False, 0.0, noise
    s = coef(sig, edge - 1, x)
    noise = s * math.sqrt(h) * gauss
    ystar = x + coef(drf, edge - 1, x) * h + noise
    if ystar >= 0.0:
        return edge, ystar, 0.0, False, 0.0, noise
    theta = x / (x - ystar)
    return draw_edge(cum_rho, unif), -ystar, -2.0 * ystar, True, theta, noise


@njit(cache=True)
def _grow(a, size):
    out = np.empty(size, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@njit(cache=True)
def simulate(gen, sig, drf, cum_rho, edge0, x0, horizon, dt, eta, keep_noise):
    """Nonsticky path until the sticky clock ``s + eta * ell(s)`` reaches ``horizon``.

    With ``eta == 0`` this is simply the path on ``[0, horizon]``.  A knot at
    ``x == 0`` is inserted at every crossing; vertex knots carry the local time
    *before* the push, the following knot the value after it.
    """
    n_est = int(math.ceil(horizon / dt)) + 1
    cap = n_est + n_est // 8 + 64
    times = np.empty(cap)
    edges = np.empty(cap, dtype=np.int64)
    xs = np.empty(cap)
    ell = np.empty(cap)
    noise = np.zeros(cap if keep_noise else 1)
    times[0] = 0.0
    edges[0] = edge0 if x0 > 0.0 else 1
    xs[0] = x0
    ell[0] = 0.0
    k = 0
    step_index = 0
    t = 0.0
    edge = edges[0]
    x = x0
    lt = 0.0
    while True:
        remaining = horizon - (t + eta * lt)
        if remaining <= 1e-13 * horizon:
            break
        h = dt if remaining >= dt else remaining
        g = gen.standard_normal()
        u = gen.random()
        nedge, nx, push, crossed, theta, nz = step(sig, drf, cum_rho, edge, x, h, g, u)
        step_index += 1
        if remaining >= dt:
            t_next = step_index * dt
            if t_next <= t:
                t_next = t + h
        else:
            t_next = t + h
        if k + 3 >= times.shape[0]:
            size = times.shape[0] * 2
            times = _grow(times, size)
            edges = _grow(edges, size)
            xs = _grow(xs, size)
            ell = _grow(ell, size)
            if keep_noise:
                noise = _grow(noise, size)
        if crossed:
            tc = t + theta * h
            if tc <= t:
                tc = np.nextafter(t, np.inf)
            if tc >= t_next:
                tc = np.nextafter(t_next, -np.inf)
            k += 1
            times[k] = tc
            edges[k] = 1
            xs[k] = 0.0
            ell[k] = lt
            if keep_noise:
                noise[k] = 0.0
        lt += push
        k += 1
        times[k] = t_next
        edge = nedge if nx > 0.0 else 1
        x = nx
        edges[k] = edge
        xs[k] = x
        ell[k] = lt
        if keep_noise:
            noise[k] = nz
        t = t_next
    m = k + 1
    if keep_noise:
        return times[:m].copy(), edges[:m].copy(), xs[:m].copy(), ell[:m].copy(), noise[:m].copy()
    return times[:m].copy(), edges[:m].copy(), xs[:m].copy(), ell[:m].copy(), noise[:1].copy()


@njit(cache=True)
def run_to_exit(gen, sig, drf, cum_rho, edge0, x0, delta, dt, eta, t_cap, bridge):
    """Nonsticky run until ``x >= delta``.

    Returns ``(t_exit, ell_at_exit, exit_edge, capped)`` on the nonsticky
    clock.  With ``bridge`` set, a step whose endpoints both lie below
    ``delta`` on one edge also exits with the Brownian-bridge probability
    ``exp(-2 (delta - x)(delta - x') / (sigma^2 h))``.
    """
    t = 0.0
    edge = edge0 if x0 > 0.0 else 1
    x = x0
    lt = 0.0
    if x >= delta:
        return 0.0, 0.0, edge, False
    n = 0
    while True:
        if t + eta * lt >= t_cap:
            return t, lt, edge, True
        g = gen.standard_normal()
        u = gen.random()
        u2 = gen.random()
        s = coef(sig, edge - 1, x)
        nedge, nx, push, crossed, theta, nz = step(sig, drf, cum_rho, edge, x, dt, g, u)
        n += 1
        t_next = n * dt
        lt += push
        if nx >= delta:
            if crossed or x == 0.0:
                return t_next, lt, nedge, False
            frac = (delta - x) / (nx - x)
            return t + frac * dt, lt, nedge, False
        if bridge and not crossed and x > 0.0:
            p = math.exp(-2.0 * (delta - x) * (delta - nx) / (s * s * dt))
            if u2 < p:
                return t + 0.5 * dt, lt, nedge, False
        t = t_next
        edge = nedge if nx > 0.0 else 1
        x = nx


@njit(cache=True)
def count_upcrossings(times, xs, delta, t_end):
    """Alternating hits of 0 then ``delta``; returns the number completed by ``t_end``."""
    seek_delta = False
    count = 0
    for k in range(times.shape[0]):
        if times[k] > t_end:
            break
        if seek_delta:
            if xs[k] >= delta:
                count += 1
                seek_delta = False
        elif xs[k] == 0.0:
            seek_delta = True
    return count
