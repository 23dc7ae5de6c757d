import io
import json

import numpy as np
import pytest

from stickygraph import cli
from stickygraph.errors import ConfigError
from stickygraph.graph import VERTEX
from stickygraph.io import export_path_csv, import_path_csv, path_csv_text
from stickygraph.paths import NONSTICKY, Path, simulate_sticky, stream


def test_single_knot_path():
    p = Path(np.array([0.0]), np.array([1]), np.array([0.5]), np.array([0.0]), NONSTICKY)
    text = path_csv_text(p)
    assert text.splitlines() == ["t,edge,x,ell", "0.0,1,0.5,0.0"]


def test_plateau_rows(sym3):
    x = simulate_sticky(sym3, VERTEX, 1.0, 1e-3, stream(1, 0))
    rows = path_csv_text(x).splitlines()[1:]
    k = int(np.flatnonzero(x.plateau_mask())[0])
    a, b = rows[k].split(","), rows[k + 1].split(",")
    assert a[2] == b[2] == "0.0"
    assert float(b[0]) - float(a[0]) > 0


def test_csv_round_trip(sym3, tmp_path):
    x = simulate_sticky(sym3, VERTEX, 1.0, 1e-3, stream(2, 0))
    export_path_csv(x, tmp_path / "p.csv")
    y = import_path_csv(tmp_path / "p.csv")
    for name in ("times", "edges", "xs", "ell"):
        assert np.array_equal(getattr(x, name), getattr(y, name))
    with pytest.raises(ValueError):
        import_path_csv(io.StringIO("a,b\n1,2\n"))


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        cli.resolve_config({"graph": {"n_edges": 2, "wobble": 1}}, "bvp")
    with pytest.raises(ConfigError):
        cli.resolve_config({"numerics": {"dt": -1.0}}, "bvp")
    with pytest.raises(ConfigError):
        cli.resolve_config({"experiment": {"kind": "bvp"}}, "simulate")
    with pytest.raises(ConfigError):
        cli.resolve_config({"extra": 1}, "bvp")


def test_overrides():
    raw = cli.apply_overrides({"graph": {"eta": 1.0}}, ["graph.eta=0.25", "experiment.delta=0.05", "output=x"])
    assert raw == {"graph": {"eta": 0.25}, "experiment": {"delta": 0.05}, "output": "x"}


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"graph": {"n_edges": 2, "rho": [0.6, 0.6]}}))
    assert cli.main(["bvp", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "weights sum" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.main(["bvp", "--config", str(tmp_path / "broken.json")]) == 2


def test_simulate_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        args = ["simulate", "--seed", "42", "--out", str(tmp_path / name), "--set", "numerics.n_paths=3",
                "--set", "numerics.dt=1e-3"]
        assert cli.main(args) == 0
    for i in range(3):
        f = f"paths/path_{i:05d}.csv"
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_resolved_config_reproduces(tmp_path):
    assert cli.main(["ito-test", "--out", str(tmp_path / "a"), "--set", "numerics.n_paths=5",
                     "--set", "experiment.function=\"radial\""]) == 0
    resolved = json.loads((tmp_path / "a" / "config.resolved.json").read_text())
    assert resolved["experiment"]["exact_tol"] == 1e-12
    resolved["output"] = str(tmp_path / "b")
    (tmp_path / "again.json").write_text(json.dumps(resolved))
    assert cli.main(["ito-test", "--config", str(tmp_path / "again.json")]) == 0
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert a == b


def test_bvp_run(tmp_path, capsys):
    assert cli.main(["bvp", "--out", str(tmp_path), "--set", "graph.sigma=1.4142135623730951"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS bvp-residual")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["u_vertex"] == pytest.approx(0.055, abs=1e-12)
    assert (tmp_path / "bvp_solution.csv").read_text().startswith("edge,x,u\n")


def test_exit_stats_run(tmp_path, capsys):
    args = ["exit-stats", "--out", str(tmp_path), "--seed", "1", "--set", "graph.sigma=1.4142135623730951",
            "--set", "numerics.n_paths=2000", "--set", "numerics.dt=1e-5"]
    assert cli.main(args) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["oracle_value"] == pytest.approx(0.055, abs=1e-12)
    assert summary["pass"] is True
    assert "PASS exit-time" in capsys.readouterr().out


def test_failed_check_exit_code(tmp_path):
    # the vertex term switched off cannot reproduce the constant solution
    args = ["fk-elliptic", "--out", str(tmp_path), "--set", "numerics.n_paths=50", "--set", "numerics.dt=2e-3",
            "--set", "numerics.horizon=10", "--set", "numerics.truncation_R=20", "--set", "experiment.vertex_term=false"]
    assert cli.main(args) == 1


def test_parabolic_run_writes_grid(tmp_path):
    args = ["fk-parabolic", "--out", str(tmp_path), "--set", "numerics.n_paths=200", "--set", "numerics.dt=1e-3",
            "--set", "numerics.mesh_m=100", "--set", "numerics.time_steps=100", "--set", "experiment.rel_tol=0.1"]
    assert cli.main(args) == 0
    head = (tmp_path / "parabolic_solution.csv").read_text().splitlines()[:2]
    assert head[0] == "t,edge,x,u"
