"""Command-line front end: ``check``, ``sweep``, ``trace`` and ``solve``.

Exit codes: 0 success, 2 derivative-bound violation under ``--strict``,
3 continuation stall or solver failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .analysis import check_hypotheses, enforce
from .continuation import (
    ContinuationCurve,
    CurveSample,
    continue_in_k,
    curve_summary,
    extend_sweep,
    state_at,
    sweep_xi,
    trace_mu_crossings,
)
from .errors import ConfigError, ContinuationStalled, ExprError, HypothesisViolation, PlasmaFBPError
from .mesh import Mesh
from .model import ProblemSpec, decompose_forcing, forcing_from_parts, nonlinearity_from_text, sample
from .solver import AugmentedState

log = logging.getLogger("plasmafbp")

EXIT_OK = 0
EXIT_STRICT = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4

CURVE_COLUMNS = ("xi1", "mu", "b", "sup_norm_U", "newton_iters", "cond_est")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

_SCHEMA = {
    "domain": {"kind", "L", "n", "Lx", "Ly", "nx", "ny"},
    "g": None,
    "g_bound": None,
    "g_asymptotes": None,
    "forcing": {"p", "mu0", "theta"},
    "sweep": {"xi_min", "xi_max", "step", "anchor"},
    "solver": {"tolerance", "max_iterations", "k_step", "min_k_step"},
    "output": {"directory", "snapshots", "plot_script"},
    "strict_hypotheses": None,
}


def _number(value, where: str, integer: bool = False, positive: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if integer and (not isinstance(value, int)):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where} must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{where} must be positive")
    return value


def _text_or_number(value, where: str):
    if isinstance(value, str):
        return value
    return float(_number(value, where))


@dataclass
class RunConfig:
    domain: dict
    g: str
    g_bound: Optional[float] = None
    g_asymptotes: Optional[tuple] = None
    forcing: dict = field(default_factory=lambda: {"mu0": 0.0, "theta": 0.0})
    sweep: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    strict_hypotheses: bool = False
    base_dir: Path = Path(".")

    @classmethod
    def from_mapping(cls, data, base_dir: Path = Path(".")) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at top level")
        for key, value in data.items():
            if key not in _SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            allowed = _SCHEMA[key]
            if allowed is not None:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be a mapping")
                extra = set(value) - allowed
                if extra:
                    raise ConfigError(f"unknown key(s) in {key}: {', '.join(sorted(map(str, extra)))}")
        for key in ("domain", "g"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")

        dom = dict(data["domain"])
        kind = dom.get("kind", "interval")
        if kind == "interval":
            need, ints = ("L", "n"), ("n",)
        elif kind == "rectangle":
            need, ints = ("Lx", "Ly", "nx", "ny"), ("nx", "ny")
        else:
            raise ConfigError(f"domain.kind must be 'interval' or 'rectangle', got {kind!r}")
        for k in need:
            if k not in dom:
                raise ConfigError(f"domain.{k} is required for kind {kind!r}")
            _number(dom[k], f"domain.{k}", integer=k in ints, positive=True)
        stray = set(dom) - set(need) - {"kind"}
        if stray:
            raise ConfigError(f"domain keys {sorted(stray)} do not apply to kind {kind!r}")
        dom["kind"] = kind

        if not isinstance(data["g"], str):
            raise ConfigError("g must be a builtin name or expression text")
        bound = data.get("g_bound")
        if bound is not None:
            bound = float(_number(bound, "g_bound", positive=True))
        asym = data.get("g_asymptotes")
        if asym is not None:
            if not (isinstance(asym, (list, tuple)) and len(asym) == 2):
                raise ConfigError("g_asymptotes must be a pair [lower, upper]")
            asym = tuple(float(_number(a, "g_asymptotes")) for a in asym)

        forcing = dict(data.get("forcing") or {"mu0": 0.0, "theta": 0.0})
        if "p" in forcing:
            if {"mu0", "theta"} & set(forcing):
                raise ConfigError("forcing takes either p, or mu0 with theta, not both")
            forcing["p"] = _text_or_number(forcing["p"], "forcing.p")
        else:
            forcing["mu0"] = float(_number(forcing.get("mu0", 0.0), "forcing.mu0"))
            forcing["theta"] = _text_or_number(forcing.get("theta", 0.0), "forcing.theta")

        sweep = dict(data.get("sweep") or {})
        for k in ("xi_min", "xi_max", "step", "anchor"):
            if sweep.get(k) is not None:
                sweep[k] = float(_number(sweep[k], f"sweep.{k}", positive=k == "step"))
        solver = dict(data.get("solver") or {})
        for k in solver:
            solver[k] = _number(solver[k], f"solver.{k}", integer=k == "max_iterations", positive=True)
        output = dict(data.get("output") or {})
        snaps = output.get("snapshots", [])
        if not isinstance(snaps, list):
            raise ConfigError("output.snapshots must be a list of xi1 values")
        output["snapshots"] = [float(_number(v, "output.snapshots")) for v in snaps]
        output["plot_script"] = bool(output.get("plot_script", True))
        strict = data.get("strict_hypotheses", False)
        if not isinstance(strict, bool):
            raise ConfigError("strict_hypotheses must be true or false")
        return cls(dom, data["g"], bound, asym, forcing, sweep, solver, output, strict, Path(base_dir))

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        return cls.from_mapping(data, base_dir=path.resolve().parent)

    def canonical(self) -> dict:
        """Fields that determine computed values (sweep range excluded)."""
        return {
            "domain": self.domain,
            "g": self.g,
            "g_bound": self.g_bound,
            "g_asymptotes": self.g_asymptotes,
            "forcing": self.forcing,
            "solver": self.solver,
            "step": self.sweep.get("step"),
            "anchor": self.sweep.get("anchor"),
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def mesh(self) -> Mesh:
        d = self.domain
        if d["kind"] == "interval":
            return Mesh.interval(float(d["L"]), int(d["n"]))
        return Mesh.rectangle(float(d["Lx"]), float(d["Ly"]), int(d["nx"]), int(d["ny"]))

    def build_spec(self) -> ProblemSpec:
        m = self.mesh()
        try:
            g = nonlinearity_from_text(self.g, dim=m.dim, bound=self.g_bound, asymptotes=self.g_asymptotes)
            if "p" in self.forcing:
                forcing = decompose_forcing(m, sample(m, self.forcing["p"]))
            else:
                forcing = forcing_from_parts(m, self.forcing["mu0"], self.forcing["theta"])
        except ExprError as exc:
            raise ConfigError(f"bad expression: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        controls = {}
        names = {"tolerance": "tol", "max_iterations": "max_iter", "k_step": "dk", "min_k_step": "dk_min"}
        for k, v in self.solver.items():
            controls[names[k]] = v
        sw = self.sweep
        for k, name in (("xi_min", "xi_min"), ("xi_max", "xi_max"), ("step", "xi_step"), ("anchor", "anchor")):
            if sw.get(k) is not None:
                controls[name] = sw[k]
        try:
            return ProblemSpec(mesh=m, g=g, forcing=forcing, **controls)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def output_dir(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        d = Path(self.output.get("directory", "out"))
        return d if d.is_absolute() else self.base_dir / d


# --------------------------------------------------------------------------
# file output
# --------------------------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g17(v: float) -> str:
    return "%.17g" % v


def curve_csv(curve: ContinuationCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for s in curve.samples:
        w.writerow([_g17(s.xi1), _g17(s.mu), _g17(s.b), _g17(s.sup_norm_U), str(int(s.newton_iters)), _g17(s.cond_est)])
    return buf.getvalue()


def read_curve_csv(path) -> ContinuationCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVE_COLUMNS:
        raise ConfigError(f"{path} does not have the curve header")
    samples = [
        CurveSample(float(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]), float(r[5])) for r in rows[1:]
    ]
    return ContinuationCurve(samples=samples)


def field_csv(m: Mesh, state: AugmentedState) -> str:
    cols = ["x", "y"][: m.dim] + ["u"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    u = m.full_field(state.u, state.b)
    for c, val in zip(m.all_coords, u):
        w.writerow([_g17(v) for v in c] + [_g17(val)])
    return buf.getvalue()


def plot_script(csv_name: str, title: str) -> str:
    return "\n".join(
        [
            "# gnuplot script: mu against the average parameter xi1",
            "set datafile separator ','",
            "set key autotitle columnhead",
            "set xlabel 'xi1'",
            "set ylabel 'mu'",
            f"set title '{title}'",
            "set grid",
            f"plot '{csv_name}' using 1:2 with linespoints pt 7 ps 0.4 title 'mu(xi1)'",
            "pause -1",
            "",
        ]
    )


def _json(obj) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        raise TypeError(f"not serializable: {type(o)}")

    return json.dumps(obj, indent=2, sort_keys=True, default=default, allow_nan=True) + "\n"


def _save_ends(path: Path, lo: AugmentedState, hi: AugmentedState) -> None:
    """End states of a curve, needed to extend it on resume."""
    buf = io.BytesIO()
    np.savez(buf, lo_U=lo.U, lo=np.array([lo.beta, lo.mu, lo.xi1]), hi_U=hi.U, hi=np.array([hi.beta, hi.mu, hi.xi1]))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def _load_ends(path: Path) -> tuple:
    with np.load(path) as z:
        lo = AugmentedState(U=z["lo_U"], beta=float(z["lo"][0]), mu=float(z["lo"][1]), xi1=float(z["lo"][2]))
        hi = AugmentedState(U=z["hi_U"], beta=float(z["hi"][0]), mu=float(z["hi"][1]), xi1=float(z["hi"][2]))
    return lo, hi


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

class _Run:
    """Shared state of one command execution."""

    def __init__(self, args):
        self.args = args
        self.config = RunConfig.load(args.config)
        self.spec = self.config.build_spec()
        self.out = self.config.output_dir(args.out)
        self.strict = bool(args.strict or self.config.strict_hypotheses)

    def hypotheses(self, mu0=None):
        report = check_hypotheses(self.spec, mu0=mu0)
        print(report.text())
        write_atomic(self.out / "report.json", _json(report.to_dict()))
        enforce(report, self.strict)
        return report


def run_check(args) -> int:
    run = _Run(args)
    run.hypotheses()
    return EXIT_OK


def _sweep(run: _Run) -> ContinuationCurve:
    spec, cfg, out = run.spec, run.config, run.out
    csv_path, meta_path, ends_path = out / "curve.csv", out / "curve.meta.json", out / "curve.ends.npz"
    digest = cfg.spec_hash()
    xi_min, xi_max, step = spec.xi_min, spec.xi_max, spec.xi_step

    curve = None
    if run.args.resume and csv_path.exists() and meta_path.exists() and ends_path.exists():
        meta = json.loads(meta_path.read_text())
        if meta.get("spec_hash") == digest:
            old = read_curve_csv(csv_path)
            lo, hi = _load_ends(ends_path)
            samples, err = list(old.samples), []
            if xi_min < lo.xi1:
                part = extend_sweep(spec, lo, xi_min, step)
                samples = part.samples + samples
                lo = part.states[0] if part.states else lo
                if part.error:
                    err.append(part.error)
            if xi_max > hi.xi1:
                part = extend_sweep(spec, hi, xi_max, step)
                samples = samples + part.samples
                hi = part.states[-1] if part.states else hi
                if part.error:
                    err.append(part.error)
            curve = ContinuationCurve(samples=samples, states=None, stalled=bool(err), error="; ".join(err) or None)
            curve.provenance = dict(meta.get("provenance", {}), resumed=True)
            ends = (lo, hi)
            log.info("resumed %d samples; curve now has %d", len(old), len(curve))
        else:
            log.info("spec hash changed; recomputing the curve")
    if curve is None:
        try:
            curve = sweep_xi(spec, xi_min, xi_max, step)
        except ContinuationStalled as exc:
            curve = ContinuationCurve(samples=[], stalled=True, error=str(exc))
        ends = (curve.states[0], curve.states[-1]) if curve.states else None

    curve.provenance.update({"spec_hash": digest, "version": __version__})
    name = "curve.csv.partial" if curve.stalled else "curve.csv"
    write_atomic(out / name, curve_csv(curve))
    stale = (csv_path, meta_path, ends_path) if curve.stalled else (out / "curve.csv.partial",)
    for path in stale:
        if path.exists():
            path.unlink()
    if not curve.stalled:
        if ends is not None:
            _save_ends(ends_path, *ends)
        meta = {
            "spec_hash": digest,
            "xi_min": float(curve.xi[0]),
            "xi_max": float(curve.xi[-1]),
            "step": step,
            "provenance": curve.provenance,
        }
        write_atomic(meta_path, _json(meta))
        if cfg.output.get("plot_script", True):
            write_atomic(out / "curve.gp", plot_script("curve.csv", f"g = {cfg.g}"))
    for i, xi in enumerate(cfg.output.get("snapshots", [])):
        if len(curve) and curve.xi[0] - 1e-12 <= xi <= curve.xi[-1] + 1e-12:
            st, _ = state_at(spec, curve, xi)
            write_atomic(out / f"solution_{i}.csv", field_csv(spec.mesh, st))
        else:
            log.warning("snapshot xi1=%g lies outside the computed curve", xi)
    if curve.stalled:
        raise _Stalled(curve.error)
    return curve


class _Stalled(Exception):
    pass


def run_sweep(args) -> int:
    run = _Run(args)
    run.hypotheses()
    curve = _sweep(run)
    print(f"wrote {len(curve)} samples to {run.out / 'curve.csv'}")
    return EXIT_OK


def run_trace(args) -> int:
    run = _Run(args)
    mu0 = run.spec.mu0 if args.mu0 is None else float(args.mu0)
    report = run.hypotheses(mu0=mu0)
    curve = _sweep(run)
    result = trace_mu_crossings(curve, run.spec, mu0)
    for old in run.out.glob("trace_solution_*.csv"):
        old.unlink()
    for i, c in enumerate(c for c in result.crossings if c.ok):
        write_atomic(run.out / f"trace_solution_{i}.csv", field_csv(run.spec.mesh, c.state))
    summary = curve_summary(curve, run.spec, level=mu0) if len(curve) >= 10 else None
    record = {
        "mu0": mu0,
        "crossing_count": len(result.roots),
        "roots": result.roots,
        "grazing": result.grazing,
        "failures": [{"xi1": c.xi1, "error": c.error} for c in result.failures],
        "checks": [c.checks for c in result.crossings if c.ok],
        "mu_minus": summary.mu_min if summary else None,
        "mu_plus": summary.mu_max if summary else None,
        "xi_at_mu_minus": summary.xi_at_min if summary else None,
        "xi_at_mu_plus": summary.xi_at_max if summary else None,
        "window": [report.window.lower, report.window.upper],
        "window_verdict": report.verdict,
    }
    write_atomic(run.out / "trace_summary.json", _json(record))
    print(f"mu0 = {mu0:.10g}: {len(result.roots)} solution(s)")
    for x in result.roots:
        print(f"  xi1 = {x:.12g}")
    if result.grazing:
        print(f"  grazing near xi1 = {', '.join(f'{x:.6g}' for x in result.grazing)}")
    print(f"  window verdict: {report.verdict}")
    if result.failures:
        for c in result.failures:
            print(f"  refinement failed near xi1 = {c.xi1:.6g}: {c.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def run_solve(args) -> int:
    run = _Run(args)
    run.hypotheses()
    state, ktrace = continue_in_k(run.spec, float(args.xi1))
    write_atomic(run.out / "solution.csv", field_csv(run.spec.mesh, state))
    record = {
        "xi1": state.xi1,
        "mu": state.mu,
        "b": state.b,
        "sup_norm_U": state.sup_norm_U,
        "k_trace": [{"k": s.k, "mu": s.state.mu, "newton_iters": s.report.iterations, "cond_est": s.report.cond_est} for s in ktrace],
    }
    write_atomic(run.out / "solution.json", _json(record))
    print(f"xi1 = {state.xi1:.10g}: mu = {state.mu:.12g}, b = {state.b:.12g} ({len(ktrace) - 1} k-steps)")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="YAML run configuration")
    common.add_argument("--strict", action="store_true", help="fail (exit 2) when M < min(c0, lambda2) does not hold")
    common.add_argument("--resume", action="store_true", help="reuse a stored curve with a matching spec hash")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="plasmafbp", description="Free-boundary continuation solver.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("check", parents=[common], help="hypothesis report only")
    sub.add_parser("sweep", parents=[common], help="trace mu(xi1) and write curve.csv")
    t = sub.add_parser("trace", parents=[common], help="solutions with mean forcing mu0")
    t.add_argument("--mu0", type=float, help="override the mean forcing")
    s = sub.add_parser("solve", parents=[common], help="single continuation in k at fixed xi1")
    s.add_argument("--xi1", type=float, required=True)
    return p


COMMANDS = {"check": run_check, "sweep": run_sweep, "trace": run_trace, "solve": run_solve}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_STRICT
    except _Stalled as exc:
        print(f"continuation stalled: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PlasmaFBPError as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # keep the exit-code contract for unforeseen faults
        log.debug("unexpected failure", exc_info=True)
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
