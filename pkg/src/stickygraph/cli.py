"""Batch command-line frontend.

    stickygraph SUBCOMMAND [--config FILE] [--seed N] [--out DIR] [--set key=value ...]

The config is JSON with the blocks ``graph``, ``experiment``, ``numerics``,
``seed`` and ``output``; ``--set numerics.dt=1e-5`` overrides any leaf.  The
fully resolved config is written next to the results so that running it
again reproduces them bit for bit.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Any, Callable

import numpy as np

from . import io as sio
from .bvp import bvp_residual, solve_ball_bvp, solve_elliptic, solve_parabolic
from .errors import ConfigError, NumericsError
from .graph import CoefficientSpec, GraphPoint, StarGraph, build_graph
from .paths import simulate_nonsticky, simulate_sticky, stream
from .validation import (
    constant_function,
    exp_affine_function,
    ito_residual,
    mc_exit_stats,
    mc_feynman_kac_elliptic,
    mc_feynman_kac_parabolic,
    radial_function,
    time_function,
)

KINDS = ("simulate", "exit-stats", "fk-elliptic", "fk-parabolic", "bvp", "ito-test")

GRAPH_DEFAULTS = {
    "n_edges": 3,
    "rho": None,
    "eta": 0.5,
    "sigma": 1.0,
    "drift": 0.0,
    "sigma_floor": 1e-3,
}
NUMERICS_DEFAULTS = {
    "dt": 1e-4,
    "n_paths": 1000,
    "horizon": 1.0,
    "mesh_m": 400,
    "truncation_R": 6.0,
    "time_steps": 400,
    "quad_nodes": 2049,
}
VERTEX_OBJ = {"edge": 1, "x": 0.0}
EXPERIMENT_DEFAULTS = {
    "simulate": {"x0": VERTEX_OBJ, "sticky": True},
    "exit-stats": {"delta": 0.1, "t_cap": None, "bridge": True, "rel_tol": 0.02},
    "fk-elliptic": {
        "lam": 1.0, "f": -1.0, "theta": -1.0, "x0": VERTEX_OBJ, "vertex_term": True,
        "oracle": True, "rel_tol": 0.02,
    },
    "fk-parabolic": {
        "T": 1.0, "t0": 0.0, "x0": VERTEX_OBJ, "u_T": {"kind": "exp", "a": 1.0, "b": -1.0},
        "f": 0.0, "theta": 0.0, "oracle": True, "rel_tol": 0.02,
    },
    "bvp": {"delta": 0.1, "f": -1.0, "tol": 1e-8},
    "ito-test": {"function": "time", "c": None, "exact_tol": 1e-12},
}


@dataclass
class RunConfig:
    graph: dict
    experiment: dict
    numerics: dict
    seed: int
    output: str

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    def to_obj(self) -> dict:
        return {
            "graph": self.graph, "experiment": self.experiment, "numerics": self.numerics,
            "seed": self.seed, "output": self.output,
        }

    def build_graph(self) -> StarGraph:
        graph = dict(self.graph)
        if graph["rho"] is None:
            graph["rho"] = [1.0 / graph["n_edges"]] * graph["n_edges"]
        return build_graph(graph)


def _merge_block(name: str, given: Any, defaults: dict) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _positive(block: dict, name: str, keys: tuple[str, ...]) -> None:
    for k in keys:
        v = block[k]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0 or not math.isfinite(v):
            raise ConfigError(f"{name}.{k} must be a positive number, got {v!r}")


def resolve_config(raw: dict, kind: str | None = None) -> RunConfig:
    """Materialise defaults and reject unknown or invalid entries."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"graph", "experiment", "numerics", "seed", "output"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    exp = dict(raw.get("experiment") or {})
    given_kind = exp.pop("kind", None)
    if kind is not None and given_kind is not None and kind != given_kind:
        raise ConfigError(f"config describes a '{given_kind}' run, not '{kind}'")
    kind = kind or given_kind
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind must be one of {KINDS}, got {kind!r}")
    graph = _merge_block("graph", raw.get("graph"), GRAPH_DEFAULTS)
    numerics = _merge_block("numerics", raw.get("numerics"), NUMERICS_DEFAULTS)
    experiment = {"kind": kind, **_merge_block("experiment", exp, EXPERIMENT_DEFAULTS[kind])}
    _positive(numerics, "numerics", ("dt", "horizon", "truncation_R"))
    for k in ("n_paths", "mesh_m", "time_steps", "quad_nodes"):
        if not isinstance(numerics[k], int) or isinstance(numerics[k], bool) or numerics[k] < 1:
            raise ConfigError(f"numerics.{k} must be a positive integer, got {numerics[k]!r}")
    for k in ("delta", "lam", "T"):
        if k in experiment:
            _positive(experiment, "experiment", (k,))
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    output = raw.get("output", "out")
    if not isinstance(output, str):
        raise ConfigError("output must be a directory name")
    cfg = RunConfig(graph, experiment, numerics, seed, output)
    try:
        cfg.build_graph()
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad graph block: {exc}") from exc
    return cfg


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """``a.b.c=value`` sets a nested key; values are parsed as JSON when possible."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        parts = key.split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key}: '{p}' is not a block")
        node[parts[-1]] = _parse_value(value)
    return raw


# ------------------------------------------------------------------- helpers


def _point(obj: Any) -> GraphPoint:
    if not isinstance(obj, dict) or set(obj) - {"edge", "x"}:
        raise ConfigError(f"a point is {{'edge': int, 'x': float}}, got {obj!r}")
    return GraphPoint(int(obj.get("edge", 1)), float(obj.get("x", 0.0)))


def function_spec(obj: Any) -> Callable[[np.ndarray], np.ndarray]:
    """Coefficient specs plus ``{"kind": "exp", "a", "b"}`` for ``a e^{b x}``."""
    if isinstance(obj, dict) and obj.get("kind") == "exp":
        if set(obj) - {"kind", "a", "b"}:
            raise ConfigError(f"unknown keys in exp spec: {sorted(set(obj) - {'kind', 'a', 'b'})}")
        a, b = float(obj.get("a", 1.0)), float(obj.get("b", -1.0))
        return lambda x: a * np.exp(b * np.asarray(x, dtype=float))
    try:
        return CoefficientSpec.from_obj(obj)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad function spec {obj!r}: {exc}") from exc


def edgewise_spec(obj: Any, n: int) -> list:
    if isinstance(obj, list):
        if len(obj) != n:
            raise ConfigError(f"expected {n} per-edge entries, got {len(obj)}")
        return [function_spec(o) for o in obj]
    return [function_spec(obj)] * n


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _within(est, se, bias, oracle, rel_tol) -> bool:
    return abs(est - oracle) <= max(3 * se + bias, rel_tol * abs(oracle))


# ----------------------------------------------------------------- runners


def run_simulate(cfg: RunConfig, g: StarGraph, out: FsPath):
    e, num = cfg.experiment, cfg.numerics
    x0 = _point(e["x0"])
    sim = simulate_sticky if e["sticky"] else simulate_nonsticky
    pdir = out / "paths"
    pdir.mkdir(parents=True, exist_ok=True)
    lengths = []
    for i in range(num["n_paths"]):
        p = sim(g, x0, num["horizon"], num["dt"], stream(cfg.seed, i), seed=(cfg.seed, i))
        sio.export_path_csv(p, pdir / f"path_{i:05d}.csv")
        lengths.append(len(p))
    summary = {"n": num["n_paths"], "dt": num["dt"], "seed": cfg.seed, "knots": lengths,
               "graph_hash": g.fingerprint()}
    return summary, []


def run_exit_stats(cfg: RunConfig, g: StarGraph, out: FsPath):
    e, num = cfg.experiment, cfg.numerics
    t_cap = np.inf if e["t_cap"] is None else float(e["t_cap"])
    st = mc_exit_stats(g, e["delta"], num["n_paths"], num["dt"], cfg.seed, t_cap=t_cap, bridge=e["bridge"])
    oracle = solve_ball_bvp(g, e["delta"], -1.0, quad_nodes=num["quad_nodes"]).u0
    ok_t = abs(st.mean_exit_time - oracle) <= max(3 * st.exit_time_se, e["rel_tol"] * oracle)
    rho = np.array(g.rho)
    ok_e = bool(np.all(np.abs(st.edge_frequency - rho) <= 3 * st.edge_halfwidth))
    target = g.eta * e["delta"]
    ok_o = abs(st.mean_vertex_occupation - target) <= 3 * st.vertex_occupation_se + e["delta"] ** 2
    checks = [
        Check("exit-time", ok_t, f"{st.mean_exit_time:.6g} +/- {st.exit_time_se:.2g} vs oracle {oracle:.6g}"),
        Check("exit-edge", ok_e, f"freq {np.round(st.edge_frequency, 4).tolist()} vs rho {list(g.rho)}"),
        Check("vertex-occupation", ok_o, f"{st.mean_vertex_occupation:.6g} vs eta*delta {target:.6g}"),
        Check("capping", st.capped_fraction <= 0.01, f"capped fraction {st.capped_fraction:.3g}"),
    ]
    summary = {
        "estimate": st.mean_exit_time, "se": st.exit_time_se, "n": st.n_paths, "dt": st.dt,
        "seed": cfg.seed, "oracle_value": oracle, "pass": all(c.passed for c in checks), **st.to_obj(),
    }
    return summary, checks


def run_fk_elliptic(cfg: RunConfig, g: StarGraph, out: FsPath):
    e, num = cfg.experiment, cfg.numerics
    x0 = _point(e["x0"])
    fs = edgewise_spec(e["f"], g.n_edges)
    est = mc_feynman_kac_elliptic(
        g, e["lam"], fs, float(e["theta"]), x0, num["n_paths"], num["dt"], num["horizon"], cfg.seed,
        vertex_term=e["vertex_term"],
    )
    summary = {**est.to_obj(), "n": est.n_paths}
    checks = []
    if e["oracle"]:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sol = solve_elliptic(g, e["lam"], fs, float(e["theta"]), num["truncation_R"], num["mesh_m"])
        sio.export_grid_csv(sol, out / "elliptic_solution.csv")
        oracle = sol.at(x0.edge, x0.x)
        ok = _within(est.value, est.std_error, est.bias_bound, oracle, e["rel_tol"])
        summary.update(oracle_value=oracle, oracle_warnings=[str(w.message) for w in caught], **{"pass": ok})
        checks.append(Check("fk-elliptic", ok, f"{est.value:.6g} +/- {est.std_error:.2g} vs FD {oracle:.6g}"))
    return summary, checks


def run_fk_parabolic(cfg: RunConfig, g: StarGraph, out: FsPath):
    e, num = cfg.experiment, cfg.numerics
    x0 = _point(e["x0"])
    uT = edgewise_spec(e["u_T"], g.n_edges)
    fs = edgewise_spec(e["f"], g.n_edges)
    theta_c = float(e["theta"])
    zero_f = e["f"] == 0 or e["f"] == 0.0
    f = None if zero_f else (lambda t, edge, x: fs[edge - 1](x))
    theta = None if theta_c == 0.0 else (lambda t: theta_c)
    est = mc_feynman_kac_parabolic(g, e["T"], f, theta, uT, e["t0"], x0, num["n_paths"], num["dt"], cfg.seed)
    summary = {**est.to_obj(), "n": est.n_paths}
    checks = []
    if e["oracle"]:
        sol = solve_parabolic(g, e["T"], f, theta, uT, num["truncation_R"], num["mesh_m"], num["time_steps"])
        sio.export_grid_csv(sol, out / "parabolic_solution.csv")
        level = int(np.argmin(np.abs(sol.times - e["t0"])))
        oracle = sol.at(x0.edge, x0.x, level)
        ok = _within(est.value, est.std_error, 0.0, oracle, e["rel_tol"])
        summary.update(oracle_value=oracle, **{"pass": ok})
        checks.append(Check("fk-parabolic", ok, f"{est.value:.6g} +/- {est.std_error:.2g} vs FD {oracle:.6g}"))
    return summary, checks


def run_bvp(cfg: RunConfig, g: StarGraph, out: FsPath):
    e, num = cfg.experiment, cfg.numerics
    fs = edgewise_spec(e["f"], g.n_edges)
    sol = solve_ball_bvp(g, e["delta"], fs, quad_nodes=num["quad_nodes"])
    res = bvp_residual(g, sol, fs)
    with open(out / "bvp_solution.csv", "w", newline="") as fh:
        fh.write("edge,x,u\n")
        for i in range(g.n_edges):
            for x, u in zip(sol.y, sol.u_table[i]):
                fh.write(f"{i + 1},{float(x)!r},{float(u)!r}\n")
    worst = max(res.max_ode_residual, res.junction_residual, res.dirichlet_residual, res.continuity_residual)
    checks = [
        Check("bvp-residual", worst <= e["tol"], f"max residual {worst:.3g} (tol {e['tol']:g})"),
        Check("kappa-forms", sol.kappa_mismatch <= 1e-10, f"mismatch {sol.kappa_mismatch:.3g}"),
    ]
    summary = {
        "u_vertex": sol.u0, "eta_delta": g.eta * e["delta"], "kappa": list(sol.kappa),
        "kappa_mismatch": sol.kappa_mismatch, "max_ode_residual": res.max_ode_residual,
        "junction_residual": res.junction_residual, "dirichlet_residual": res.dirichlet_residual,
        "continuity_residual": res.continuity_residual, "max_u2": res.max_u2,
        "pass": all(c.passed for c in checks),
    }
    return summary, checks


TEST_FUNCTIONS = {
    "const": lambda c, n: constant_function(),
    "time": lambda c, n: time_function(),
    "radial": lambda c, n: radial_function(c, n),
    "exp-affine": lambda c, n: exp_affine_function(np.ones(n) if c is None else c),
}


def run_ito_test(cfg: RunConfig, g: StarGraph, out: FsPath):
    e, num = cfg.experiment, cfg.numerics
    name = e["function"]
    if name not in TEST_FUNCTIONS:
        raise ConfigError(f"experiment.function must be one of {sorted(TEST_FUNCTIONS)}")
    if e["c"] is not None and len(e["c"]) != g.n_edges:
        raise ConfigError(f"experiment.c needs {g.n_edges} entries")
    fn = TEST_FUNCTIONS[name](e["c"], g.n_edges)
    ends = np.empty(num["n_paths"])
    worst = 0.0
    for i in range(num["n_paths"]):
        p = simulate_sticky(g, VERTEX_POINT, num["horizon"], num["dt"], stream(cfg.seed, i))
        _, M = ito_residual(g, p, fn)
        ends[i] = M[-1]
        worst = max(worst, float(np.max(np.abs(M))))
    mean = float(np.mean(ends))
    se = float(np.std(ends, ddof=1) / math.sqrt(ends.size)) if ends.size > 1 else 0.0
    checks = [Check(f"ito-mean[{name}]", abs(mean) <= 3 * se + e["exact_tol"], f"mean M = {mean:.3g} +/- {se:.2g}")]
    if name in ("const", "time"):
        checks.append(Check(f"ito-exact[{name}]", worst <= e["exact_tol"], f"max |M| = {worst:.3g}"))
    summary = {"estimate": mean, "se": se, "n": ends.size, "dt": num["dt"], "seed": cfg.seed,
               "max_abs_residual": worst, "oracle_value": 0.0, "pass": all(c.passed for c in checks)}
    return summary, checks


VERTEX_POINT = GraphPoint(1, 0.0)
RUNNERS = {
    "simulate": run_simulate,
    "exit-stats": run_exit_stats,
    "fk-elliptic": run_fk_elliptic,
    "fk-parabolic": run_fk_parabolic,
    "bvp": run_bvp,
    "ito-test": run_ito_test,
}


def execute(cfg: RunConfig) -> tuple[dict, list[Check]]:
    out = FsPath(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    sio.write_json(cfg.to_obj(), out / "config.resolved.json")
    g = cfg.build_graph()
    summary, checks = RUNNERS[cfg.kind](cfg, g, out)
    summary["checks"] = [{"name": c.name, "pass": c.passed, "detail": c.detail} for c in checks]
    sio.write_json(summary, out / "summary.json")
    return summary, checks


def run(config_path: str | None, overrides: list[str], kind: str | None = None,
        seed: int | None = None, out: str | None = None) -> int:
    """Load, resolve and execute a run; returns the process exit code."""
    try:
        raw: dict = {}
        if config_path is not None:
            try:
                raw = json.loads(FsPath(config_path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        raw = apply_overrides(raw, overrides)
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["output"] = out
        cfg = resolve_config(raw, kind)
        _, checks = execute(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return 3
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="stickygraph", description=__doc__.split("\n\n")[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", help="JSON run config")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                    help="override a config leaf, e.g. numerics.dt=1e-5 (repeatable)")
    args = ap.parse_args(argv)
    return run(args.config, args.overrides, args.kind, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
