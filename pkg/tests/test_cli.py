import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
import yaml

from plasmafbp import cli
from plasmafbp.cli import RunConfig, main, read_curve_csv
from plasmafbp.errors import ConfigError


def write_config(path, **overrides):
    data = {
        "domain": {"kind": "interval", "L": 1.0, "n": 200},
        "g": "tanh",
        "forcing": {"mu0": 0.5, "theta": 0.0},
        "sweep": {"xi_min": -2.0, "xi_max": 2.0, "step": 0.1},
        "output": {"directory": "out", "snapshots": [0.0]},
    }
    data.update(overrides)
    path.write_text(yaml.safe_dump(data))
    return str(path)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_check_ok(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["check", cfg]) == 0
    assert "hypothesis report" in capsys.readouterr().out
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["satisfied"] and report["window"]["lower"] == pytest.approx(-1.0)


def test_strict_violation_exits_before_solving(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", g="15*tanh(u)")
    assert main(["check", cfg, "--strict"]) == 2
    assert main(["sweep", cfg, "--strict"]) == 2
    assert not (tmp_path / "out" / "curve.csv").exists()
    cfg2 = write_config(tmp_path / "d.yaml", g="15*tanh(u)", strict_hypotheses=True)
    assert main(["check", cfg2]) == 2


def test_malformed_expression_exit_4(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", g="tanh(u")
    assert main(["check", cfg]) == 4
    assert "offset 6" in capsys.readouterr().err


@pytest.mark.parametrize(
    "overrides",
    [
        {"colour": "red"},
        {"domain": {"kind": "interval", "L": 1.0, "n": 200, "nx": 3}},
        {"domain": {"kind": "disk", "R": 1.0}},
        {"domain": {"kind": "interval", "L": 1.0, "n": 2.5}},
        {"sweep": {"xi_min": 0.0, "xi_max": 1.0, "stride": 0.1}},
        {"sweep": {"xi_min": 1.0, "xi_max": 0.0, "step": 0.1}},
        {"solver": {"tolerance": float("nan")}},
        {"forcing": {"p": "x", "mu0": 0.1}},
        {"forcing": {"mu0": 0.0, "theta": "q*x"}},
        {"g": 3},
        {"strict_hypotheses": "yes"},
    ],
)
def test_config_errors_exit_4(tmp_path, overrides):
    cfg = write_config(tmp_path / "c.yaml", **overrides)
    assert main(["check", cfg]) == 4


def test_unreadable_or_invalid_files_exit_4(tmp_path):
    assert main(["check", str(tmp_path / "missing.yaml")]) == 4
    bad = tmp_path / "bad.yaml"
    bad.write_text("domain: [unclosed\n")
    assert main(["check", str(bad)]) == 4


def test_argument_errors_exit_4(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    with pytest.raises(SystemExit) as info:
        main(["solve", cfg])
    assert info.value.code == 4
    with pytest.raises(SystemExit) as info:
        main(["explode", cfg])
    assert info.value.code == 4


def test_sweep_outputs(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["sweep", cfg]) == 0
    out = tmp_path / "out"
    table = rows(out / "curve.csv")
    assert table[0] == ["xi1", "mu", "b", "sup_norm_U", "newton_iters", "cond_est"]
    xi = np.array([float(r[0]) for r in table[1:]])
    mu = np.array([float(r[1]) for r in table[1:]])
    assert len(xi) == 41 and np.max(np.abs(mu - np.tanh(xi))) <= 1e-9
    assert "curve.csv" in (out / "curve.gp").read_text()
    snap = rows(out / "solution_0.csv")
    assert snap[0] == ["x", "u"] and len(snap) == 202
    assert all(abs(float(r[1])) <= 1e-12 for r in snap[1:])


def test_csv_round_trip_is_exact(tmp_path, tanh_spec):
    from plasmafbp import sweep_xi

    curve = sweep_xi(tanh_spec, -1, 1, 0.1)
    path = tmp_path / "curve.csv"
    cli.write_atomic(path, cli.curve_csv(curve))
    back = read_curve_csv(path)
    for a, b in zip(curve.samples, back.samples):
        assert (a.xi1, a.mu, a.b, a.sup_norm_U, a.newton_iters, a.cond_est) == (
            b.xi1, b.mu, b.b, b.sup_norm_U, b.newton_iters, b.cond_est
        )


def test_outputs_are_deterministic(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    main(["sweep", cfg, "--out", str(tmp_path / "a")])
    main(["sweep", cfg, "--out", str(tmp_path / "b")])
    for name in ("curve.csv", "solution_0.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_resume_extends_without_recomputation(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.yaml", sweep={"xi_min": -1.0, "xi_max": 1.0, "step": 0.1})
    assert main(["sweep", cfg]) == 0
    first = (tmp_path / "out" / "curve.csv").read_text().splitlines()

    def no_full_sweep(*a, **k):
        raise AssertionError("full sweep recomputed")

    monkeypatch.setattr(cli, "sweep_xi", no_full_sweep)
    cfg = write_config(tmp_path / "c.yaml", sweep={"xi_min": -1.5, "xi_max": 2.0, "step": 0.1})
    assert main(["sweep", cfg, "--resume"]) == 0
    second = (tmp_path / "out" / "curve.csv").read_text().splitlines()
    assert len(second) == len(first) + 5 + 10
    assert second[6 : 6 + len(first) - 1] == first[1:]
    xi = np.array([float(r.split(",")[0]) for r in second[1:]])
    mu = np.array([float(r.split(",")[1]) for r in second[1:]])
    assert np.all(np.diff(xi) > 0) and np.max(np.abs(mu - np.tanh(xi))) <= 1e-9
    # a changed problem invalidates the stored curve
    monkeypatch.undo()
    cfg = write_config(tmp_path / "c.yaml", g="ugauss", sweep={"xi_min": -1.0, "xi_max": 1.0, "step": 0.1})
    assert main(["sweep", cfg, "--resume"]) == 0
    table = rows(tmp_path / "out" / "curve.csv")[1:]
    xi = np.array([float(r[0]) for r in table])
    assert len(xi) == 21
    assert np.max(np.abs(np.array([float(r[1]) for r in table]) - xi * np.exp(-xi**2))) <= 1e-9


def test_stall_exit_3_with_partial_file(tmp_path):
    cfg = write_config(
        tmp_path / "c.yaml",
        g="30*tanh(u)",
        forcing={"mu0": 0.0, "theta": "0.5*cos(pi*x)"},
        sweep={"xi_min": -3.0, "xi_max": 3.0, "step": 0.1},
        output={"directory": "out"},
    )
    assert main(["sweep", cfg]) == 3
    out = tmp_path / "out"
    assert (out / "curve.csv.partial").exists() and not (out / "curve.csv").exists()
    assert len(rows(out / "curve.csv.partial")) > 2


def test_k_stall_exit_3_with_partial_file(tmp_path):
    cfg = write_config(
        tmp_path / "c.yaml",
        g="100*tanh(u)",
        forcing={"mu0": 0.0, "theta": "cos(pi*x)"},
        sweep={"xi_min": 1.0, "xi_max": 3.0, "step": 0.1},
        output={"directory": "out"},
    )
    assert main(["sweep", cfg]) == 3
    assert rows(tmp_path / "out" / "curve.csv.partial") == [list(cli.CURVE_COLUMNS)]


def test_trace_tanh(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml")
    assert main(["trace", cfg]) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "trace_summary.json").read_text())
    assert summary["crossing_count"] == 1
    assert summary["roots"][0] == pytest.approx(math.atanh(0.5), abs=1e-9)
    assert sorted(p.name for p in out.glob("trace_solution_*.csv")) == ["trace_solution_0.csv"]
    assert main(["trace", cfg, "--mu0", "1.5", "--resume"]) == 0
    summary = json.loads((out / "trace_summary.json").read_text())
    assert summary["crossing_count"] == 0 and summary["window"] == [-1.0, 1.0]
    assert "outside (-1,1)" in summary["window_verdict"]
    assert list(out.glob("trace_solution_*.csv")) == []


def test_trace_gaussian_two_solutions(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", g="u*exp(-u^2)", forcing={"p": 0.2}, sweep={"xi_min": -4.0, "xi_max": 4.0, "step": 0.1})
    assert main(["trace", cfg]) == 0
    out = tmp_path / "out"
    summary = json.loads((out / "trace_summary.json").read_text())
    assert summary["mu0"] == pytest.approx(0.2, abs=1e-15)
    assert summary["crossing_count"] == 2
    assert len(list(out.glob("trace_solution_*.csv"))) == 2
    assert summary["mu_plus"] == pytest.approx(0.42888, abs=1e-4)


def test_solve_command(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", forcing={"mu0": 0.0, "theta": "0.1*cos(pi*x)"})
    assert main(["solve", cfg, "--xi1", "0.3"]) == 0
    rec = json.loads((tmp_path / "out" / "solution.json").read_text())
    assert rec["xi1"] == 0.3 and len(rec["k_trace"]) == 11
    assert rows(tmp_path / "out" / "solution.csv")[0] == ["x", "u"]


def test_rectangle_config(tmp_path):
    cfg = write_config(
        tmp_path / "c.yaml",
        domain={"kind": "rectangle", "Lx": 1.0, "Ly": 1.0, "nx": 12, "ny": 12},
        forcing={"mu0": 0.0, "theta": "0.1*cos(pi*x)*cos(pi*y)"},
        sweep={"xi_min": -1.0, "xi_max": 1.0, "step": 0.25},
    )
    assert main(["sweep", cfg]) == 0
    assert rows(tmp_path / "out" / "solution_0.csv")[0] == ["x", "y", "u"]


def test_config_loader_details(tmp_path):
    cfg = RunConfig.load(write_config(tmp_path / "c.yaml", solver={"tolerance": 1e-9, "max_iterations": 30, "k_step": 0.2, "min_k_step": 1e-3}))
    spec = cfg.build_spec()
    assert (spec.tol, spec.max_iter, spec.dk, spec.dk_min) == (1e-9, 30, 0.2, 1e-3)
    assert cfg.output_dir() == tmp_path / "out"
    other = RunConfig.load(write_config(tmp_path / "d.yaml", sweep={"xi_min": -9.0, "xi_max": 9.0, "step": 0.1}))
    assert other.spec_hash() != cfg.spec_hash()
    with pytest.raises(ConfigError):
        RunConfig.from_mapping([1, 2])


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    out = subprocess.run([sys.executable, "-m", "plasmafbp", "check", cfg], capture_output=True, text=True)
    assert out.returncode == 0 and "verdict" in out.stdout
