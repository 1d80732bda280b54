"""Hypothesis checks: eigenvalue constants, derivative bound, solvability window."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import HypothesisViolation
from .linalg import eig_c0, eig_smallest_dirichlet
from .mesh import Mesh
from .model import PROBE_POINTS, Nonlinearity, ProblemSpec, estimate_M

log = logging.getLogger(__name__)

PROBE_AGREEMENT = 1e-4


@dataclass(frozen=True)
class Window:
    """Mean limits of g at u -> -inf and u -> +inf, or the reason they are missing."""

    lower: Optional[float]
    upper: Optional[float]
    source: str  # "declared", "probed" or "unavailable"
    reason: Optional[str] = None

    @property
    def available(self) -> bool:
        return self.lower is not None

    @property
    def degenerate(self) -> bool:
        return self.available and not self.lower < self.upper

    def contains(self, mu0: float) -> Optional[bool]:
        if not self.available:
            return None
        return self.lower < mu0 < self.upper

    def describe(self) -> str:
        if not self.available:
            return f"unavailable ({self.reason})"
        text = f"({self.lower:.6g}, {self.upper:.6g})"
        return text + " [empty]" if self.degenerate else text


def _mean(m: Mesh, values: np.ndarray) -> float:
    """Quadrature mean of all-node samples (interior first, then boundary)."""
    return m.integrate(values[m.interior_index], values[m.boundary_index]) / m.volume


def declared_limits(g: Nonlinearity, m: Mesh) -> tuple:
    """Domain means of the declared asymptotes g(x, -inf) and g(x, +inf)."""
    lo, hi = g.asymptotes
    c = m.all_coords
    vals = [np.broadcast_to(np.asarray(f(c), dtype=float), (m.n_nodes,)) for f in (lo, hi)]
    return tuple(_mean(m, v) for v in vals)


def ll_window(g: Nonlinearity, m: Mesh) -> Window:
    """Interval of mean forcings between the domain means of g(x, -inf) and g(x, +inf).

    Declared asymptotes are used when present.  Otherwise g is probed at
    u = +-1e3 and +-1e6; the window is unavailable when those probes differ
    by more than 1e-4 or are not finite.
    """
    if g.asymptotes is not None:
        lo, hi = declared_limits(g, m)
        return Window(lo, hi, "declared")
    c = m.all_coords
    limits = []
    for sign in (-1.0, 1.0):
        probes = []
        for p in PROBE_POINTS:
            with np.errstate(all="ignore"):
                try:
                    probes.append(g(c, np.full(len(c), sign * p)))
                except Exception as exc:  # domain errors from expression g
                    return Window(None, None, "unavailable", f"g not evaluable at u={sign * p:g}: {exc}")
        near, far = probes
        if not (np.all(np.isfinite(near)) and np.all(np.isfinite(far))):
            return Window(None, None, "unavailable", f"g not finite as u -> {'+' if sign > 0 else '-'}inf")
        gap = float(np.max(np.abs(near - far)))
        if gap > PROBE_AGREEMENT:
            return Window(
                None, None, "unavailable",
                f"no limit as u -> {'+' if sign > 0 else '-'}inf (probes differ by {gap:.3g})",
            )
        limits.append(_mean(m, far))
    return Window(limits[0], limits[1], "probed")


@dataclass(frozen=True)
class HypothesisReport:
    c0: float
    lambda1: float
    lambda2: float
    M: float
    M_estimated: bool
    satisfied: bool
    window: Window
    mu0: float
    verdict: str
    mesh_caveat: str

    @property
    def margin(self) -> float:
        return min(self.c0, self.lambda2) - self.M

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = {
            "lower": self.window.lower,
            "upper": self.window.upper,
            "source": self.window.source,
            "reason": self.window.reason,
            "empty": self.window.degenerate,
        }
        return d

    def text(self) -> str:
        lines = [
            "hypothesis report",
            f"  c0        = {self.c0:.10g}",
            f"  lambda1   = {self.lambda1:.10g}",
            f"  lambda2   = {self.lambda2:.10g}",
            f"  M         = {self.M:.10g} ({'estimated' if self.M_estimated else 'declared'})",
            f"  M < min(c0, lambda2): {'yes' if self.satisfied else 'NO'} (margin {self.margin:.6g})",
            f"  window    = {self.window.describe()} [{self.window.source}]",
            f"  mu0       = {self.mu0:.10g}",
            f"  verdict   : {self.verdict}",
            f"  note      : {self.mesh_caveat}",
        ]
        return "\n".join(lines)


def window_verdict(window: Window, mu0: float) -> str:
    if not window.available:
        return f"window unavailable ({window.reason}); existence not decided"
    bounds = f"({window.lower:.6g},{window.upper:.6g})"
    if window.degenerate:
        return f"window {bounds} is empty; the sign-change criterion does not apply"
    if window.contains(mu0):
        return f"inside {bounds}: a solution exists"
    return f"outside {bounds}: no solution exists"


def check_hypotheses(spec: ProblemSpec, mu0: float | None = None) -> HypothesisReport:
    """Eigenvalue constants, derivative bound and window verdict for ``spec``.

    The eigensolvers use a fixed seed, so the report is deterministic.
    """
    m = spec.mesh
    mu0 = spec.mu0 if mu0 is None else float(mu0)
    eig = eig_smallest_dirichlet(m, count=2)
    c0 = eig_c0(m)
    M = estimate_M(spec.g, m)
    lam1, lam2 = float(eig.values[0]), float(eig.values[1])
    window = ll_window(spec.g, m)
    h = m.h
    return HypothesisReport(
        c0=float(c0),
        lambda1=lam1,
        lambda2=lam2,
        M=float(M),
        M_estimated=spec.g.bound is None,
        satisfied=bool(M < min(c0, lam2)),
        window=window,
        mu0=mu0,
        verdict=window_verdict(window, mu0),
        mesh_caveat=f"discrete eigenvalues at h={h:.4g} underestimate the continuous ones by O(h^2)",
    )


def enforce(report: HypothesisReport, strict: bool) -> None:
    """Warn on a violated derivative bound, or raise under ``strict``."""
    if report.satisfied:
        return
    if strict:
        raise HypothesisViolation(report)
    log.warning(
        "M=%.6g is not below min(c0, lambda2)=%.6g; continuation may stall",
        report.M,
        min(report.c0, report.lambda2),
    )
