"""CSV and JSON persistence for paths, grid solutions and run summaries."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path as FsPath
from typing import IO, Any

import numpy as np

from .paths import NONSTICKY, Path

PATH_HEADER = ("t", "edge", "x", "ell")


def _num(v: float) -> str:
    # repr of a float64 is the shortest string that round-trips (at most 17 digits)
    return repr(float(v))


def _open(dest, mode):
    if isinstance(dest, (str, os.PathLike)):
        return open(dest, mode, newline=""), True
    return dest, False


def export_path_csv(path: Path, dest: str | os.PathLike | IO[str]) -> None:
    """One row per knot under the header ``t,edge,x,ell``."""
    fh, owned = _open(dest, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATH_HEADER)
        for t, e, x, l in zip(path.times, path.edges, path.xs, path.ell):
            w.writerow((_num(t), int(e), _num(x), _num(l)))
    finally:
        if owned:
            fh.close()


def import_path_csv(src: str | os.PathLike | IO[str], kind: str = NONSTICKY, eta: float = 0.0) -> Path:
    fh, owned = _open(src, "r")
    try:
        rows = list(csv.reader(fh))
    finally:
        if owned:
            fh.close()
    if not rows or tuple(rows[0]) != PATH_HEADER:
        raise ValueError(f"expected header {','.join(PATH_HEADER)}")
    body = rows[1:]
    if not body:
        raise ValueError("path file has no knots")
    cols = list(zip(*body))
    return Path(
        times=np.array(cols[0], dtype=float),
        edges=np.array(cols[1], dtype=np.int64),
        xs=np.array(cols[2], dtype=float),
        ell=np.array(cols[3], dtype=float),
        kind=kind,
        eta=eta,
    )


def path_csv_text(path: Path) -> str:
    buf = io.StringIO()
    export_path_csv(path, buf)
    return buf.getvalue()


def export_grid_csv(sol, dest: str | os.PathLike | IO[str]) -> None:
    """``edge,x,u`` for a stationary solution, ``t,edge,x,u`` for a time-dependent one.

    The vertex appears once, as edge 1 at ``x = 0``.
    """
    fh, owned = _open(dest, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        timed = sol.times is not None
        w.writerow(("t", "edge", "x", "u") if timed else ("edge", "x", "u"))
        levels = sol.values if timed else sol.values[None]
        times = sol.times if timed else [None]
        for t, vals in zip(times, levels):
            for i in range(vals.shape[0]):
                for j, x in enumerate(sol.x):
                    if j == 0 and i > 0:
                        continue
                    row = (i + 1, _num(x), _num(vals[i, j]))
                    w.writerow(((_num(t),) + row) if timed else row)
    finally:
        if owned:
            fh.close()


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(obj: Any, dest: str | os.PathLike) -> None:
    FsPath(dest).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(src: str | os.PathLike) -> Any:
    return json.loads(FsPath(src).read_text())
