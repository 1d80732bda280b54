"""Two-stage continuation: k from 0 to 1 at fixed xi1, then a sweep in xi1.

Natural-parameter stepping with the previous solution as predictor; a
failed corrector halves the step.  The sweep produces the curve mu(xi1) at
k = 1, on which crossings mu(xi1) = mu0 are located by a bracketed secant
iteration with fresh Newton solves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContinuationStalled, NewtonError
from .model import ProblemSpec
from .solver import AugmentedState, NewtonReport, check_jacobian, newton_solve, solve_linear_k0, verify_state

log = logging.getLogger(__name__)

GRAZING_TOL = 1e-8
CROSSING_TOL = 1e-10
MAX_REFINE = 100
JACOBIAN_CHECK_TOL = 1e-6


@dataclass
class KStep:
    k: float
    state: AugmentedState
    report: NewtonReport
    jacobian_mismatch: Optional[float] = None


def _jacobian_check(spec: ProblemSpec, state: AugmentedState, k: float) -> float:
    worst = check_jacobian(spec, state, k, state.xi1)
    if worst > JACOBIAN_CHECK_TOL:
        log.error("Jacobian differs from finite differences by %.3e at k=%g, xi1=%g", worst, k, state.xi1)
    return worst


@dataclass
class CurveSample:
    xi1: float
    mu: float
    b: float
    sup_norm_U: float
    newton_iters: int
    cond_est: float


@dataclass
class ContinuationCurve:
    samples: list
    states: Optional[list] = None
    stalled: bool = False
    error: Optional[str] = None
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def xi(self) -> np.ndarray:
        return np.array([s.xi1 for s in self.samples])

    @property
    def mu(self) -> np.ndarray:
        return np.array([s.mu for s in self.samples])

    @property
    def b(self) -> np.ndarray:
        return np.array([s.b for s in self.samples])

    def state_near(self, xi1: float) -> Optional[AugmentedState]:
        if not self.states:
            return None
        i = int(np.argmin(np.abs(self.xi - xi1)))
        return self.states[i]


@dataclass
class CurveSummary:
    mu_min: float
    xi_at_min: float
    mu_max: float
    xi_at_max: float
    tail_low: float
    tail_high: float
    limit_low: Optional[float] = None
    limit_high: Optional[float] = None
    level: Optional[float] = None
    crossing_count: Optional[int] = None

    @property
    def tail_gaps(self) -> Optional[tuple]:
        if self.limit_low is None:
            return None
        return (abs(self.tail_low - self.limit_low), abs(self.tail_high - self.limit_high))


@dataclass
class Crossing:
    xi1: float
    state: Optional[AugmentedState]
    report: Optional[NewtonReport]
    iterations: int
    checks: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class TraceResult:
    mu0: float
    crossings: list
    grazing: list

    @property
    def solutions(self) -> list:
        return [c.state for c in self.crossings if c.ok]

    @property
    def roots(self) -> list:
        return [c.xi1 for c in self.crossings if c.ok]

    @property
    def failures(self) -> list:
        return [c for c in self.crossings if not c.ok]


# --------------------------------------------------------------------------
# stage 1: continuation in k
# --------------------------------------------------------------------------

def _stall_hypotheses(spec: ProblemSpec):
    from .analysis import check_hypotheses

    try:
        return check_hypotheses(spec)
    except Exception as exc:  # report is diagnostic only
        log.debug("hypothesis report unavailable: %s", exc)
        return None


def continue_in_k(spec: ProblemSpec, xi1: float, verify: bool = False) -> tuple:
    """March k from 0 to 1 at fixed average ``xi1``.

    Returns the state at k = 1 and the list of accepted :class:`KStep`.
    With ``verify`` every accepted step also records the worst mismatch
    between the Jacobian and central differences of the residual.
    """
    state, rep0 = solve_linear_k0(spec, xi1, return_report=True)
    trace = [KStep(0.0, state, rep0, _jacobian_check(spec, state, 0.0) if verify else None)]
    dk_max = 1.0 if spec.g.is_zero else spec.dk
    dk = dk_max
    k = 0.0
    while k < 1.0:
        k_new = min(1.0, k + dk)
        if 1.0 - k_new < 1e-12:
            k_new = 1.0
        try:
            new, rep = newton_solve(spec, k_new, xi1, state.with_k(k_new))
        except NewtonError as exc:
            dk *= 0.5
            log.info("k-step to %.6g failed (%s); dk -> %.3g", k_new, exc, dk)
            if dk < spec.dk_min:
                raise ContinuationStalled(
                    f"continuation in k stalled at k={k:.6g} (xi1={xi1:g}): {exc}",
                    last_good=k,
                    cause=exc,
                    hypotheses=_stall_hypotheses(spec),
                ) from exc
            continue
        if rep.ill_conditioned:
            log.warning("ill-conditioned k-step at k=%g (cond %.3e)", k_new, rep.cond_est)
        state, k = new, k_new
        trace.append(KStep(k, state, rep, _jacobian_check(spec, state, k) if verify else None))
        dk = min(dk_max, 2.0 * dk)
    return state, trace


# --------------------------------------------------------------------------
# stage 2: sweep in xi1
# --------------------------------------------------------------------------

def _sample(state: AugmentedState, rep: NewtonReport) -> CurveSample:
    return CurveSample(
        xi1=state.xi1,
        mu=state.mu,
        b=state.b,
        sup_norm_U=state.sup_norm_U,
        newton_iters=rep.iterations,
        cond_est=rep.cond_est,
    )


def _targets(anchor: float, end: float, step: float) -> list:
    if end == anchor:
        return []
    sign = 1.0 if end > anchor else -1.0
    n = int(math.floor(abs(end - anchor) / step + 1e-9))
    pts = [anchor + sign * j * step for j in range(1, n + 1)]
    if not pts or abs(pts[-1] - end) > 1e-9 * step:
        pts.append(end)
    else:
        pts[-1] = end
    return pts


def _march(
    spec: ProblemSpec, start: AugmentedState, end: float, step: float, out: list, checks: Optional[list] = None
) -> Optional[str]:
    """Advance from ``start`` to ``end``; appends (state, report) pairs to ``out``."""
    state = start
    x = start.xi1
    sub = step
    for target in _targets(x, end, step):
        while x != target:
            nxt = target if abs(target - x) <= sub * (1 + 1e-12) else x + math.copysign(sub, target - x)
            try:
                new, rep = newton_solve(spec, 1.0, nxt, state.translated(nxt))
            except NewtonError as exc:
                sub *= 0.5
                log.info("xi1-step to %.6g failed (%s); step -> %.3g", nxt, exc, sub)
                if sub < 1e-4 * step:
                    return f"sweep stalled at xi1={x:.6g} heading to {target:.6g}: {exc}"
                continue
            if rep.ill_conditioned:
                log.warning("ill-conditioned sweep step at xi1=%g (cond %.3e)", nxt, rep.cond_est)
            out.append((new, rep))
            if checks is not None:
                checks.append(_jacobian_check(spec, new, 1.0))
            state, x = new, nxt
            sub = min(step, 2.0 * sub)
    return None


def sweep_xi(
    spec: ProblemSpec,
    xi_min: float | None = None,
    xi_max: float | None = None,
    step: float | None = None,
    anchor: float | None = None,
    keep_states: bool = True,
    verify: bool = False,
) -> ContinuationCurve:
    """Trace mu(xi1) at k = 1 over [xi_min, xi_max].

    The anchor solution (midpoint by default) comes from :func:`continue_in_k`;
    the sweep then marches outward in both directions with the
    constant-shift predictor.  A stall returns the partial curve with
    ``stalled=True``.  ``verify`` compares the Jacobian with finite
    differences at every accepted point; the worst mismatch is stored in
    ``provenance["jacobian_mismatch"]``.
    """
    xi_min = spec.xi_min if xi_min is None else float(xi_min)
    xi_max = spec.xi_max if xi_max is None else float(xi_max)
    step = spec.xi_step if step is None else float(step)
    if not xi_min < xi_max:
        raise ValueError("need xi_min < xi_max")
    if not step > 0:
        raise ValueError("step must be positive")
    if anchor is None:
        anchor = spec.anchor if spec.anchor is not None else 0.5 * (xi_min + xi_max)
    anchor = min(max(float(anchor), xi_min), xi_max)

    s0, ktrace = continue_in_k(spec, anchor, verify=verify)
    pairs = [(s0, ktrace[-1].report)]
    checks = [t.jacobian_mismatch for t in ktrace] if verify else None
    errors = []
    for end in (xi_max, xi_min):
        err = _march(spec, s0, end, step, pairs, checks)
        if err:
            errors.append(err)
    pairs.sort(key=lambda p: p[0].xi1)
    curve = ContinuationCurve(
        samples=[_sample(s, r) for s, r in pairs],
        states=[s for s, _ in pairs] if keep_states else None,
        stalled=bool(errors),
        error="; ".join(errors) or None,
        provenance={"tol": spec.tol, "max_iter": spec.max_iter, "step": step, "anchor": anchor},
    )
    if verify:
        curve.provenance["jacobian_mismatch"] = max(checks)
    if errors:
        log.warning("partial curve: %s", curve.error)
    return curve


def extend_sweep(spec: ProblemSpec, start: AugmentedState, end: float, step: float) -> ContinuationCurve:
    """Samples from ``start`` (exclusive) to ``end`` on the grid start.xi1 + j*step."""
    pairs: list = []
    err = _march(spec, start, float(end), float(step), pairs)
    pairs.sort(key=lambda p: p[0].xi1)
    return ContinuationCurve(
        samples=[_sample(s, r) for s, r in pairs],
        states=[s for s, _ in pairs],
        stalled=err is not None,
        error=err,
    )


# --------------------------------------------------------------------------
# crossings and summary
# --------------------------------------------------------------------------

def state_at(spec: ProblemSpec, curve: ContinuationCurve, xi1: float) -> tuple:
    """Converged state at ``xi1``: Newton from the nearest stored state, else a k-run."""
    near = curve.state_near(xi1)
    if near is not None:
        return newton_solve(spec, 1.0, xi1, near.translated(xi1))
    state, ktrace = continue_in_k(spec, xi1)
    return state, ktrace[-1].report


def _refine(spec, curve, mu0, a, b) -> Crossing:
    """Illinois-safeguarded secant iteration on xi1 inside the bracket [a, b]."""
    try:
        sa, ra = state_at(spec, curve, a)
        sb, rb = state_at(spec, curve, b)
    except (NewtonError, ContinuationStalled) as exc:
        return Crossing(0.5 * (a + b), None, None, 0, error=f"bracket endpoint solve failed: {exc}")
    fa, fb = sa.mu - mu0, sb.mu - mu0
    best = (sa, ra) if abs(fa) <= abs(fb) else (sb, rb)
    if abs(best[0].mu - mu0) <= CROSSING_TOL:
        return Crossing(best[0].xi1, best[0], best[1], 0)
    side = 0
    for it in range(1, MAX_REFINE + 1):
        x = (a * fb - b * fa) / (fb - fa)
        if not (min(a, b) < x < max(a, b)):
            x = 0.5 * (a + b)
        pred = sa if abs(x - a) <= abs(x - b) else sb
        try:
            s, r = newton_solve(spec, 1.0, x, pred.translated(x))
        except NewtonError as exc:
            return Crossing(x, None, None, it, error=f"Newton failed during refinement: {exc}")
        fx = s.mu - mu0
        if abs(fx) <= CROSSING_TOL:
            return Crossing(x, s, r, it)
        if (fx > 0) == (fa > 0):
            a, fa, sa = x, fx, s
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb, sb = x, fx, s
            if side == 1:
                fa *= 0.5
            side = 1
        if abs(b - a) <= 4 * np.finfo(float).eps * max(1.0, abs(a)):
            s = sa if abs(sa.mu - mu0) < abs(sb.mu - mu0) else sb
            if abs(s.mu - mu0) <= CROSSING_TOL:
                return Crossing(s.xi1, s, r, it)
            return Crossing(x, s, r, it, error="bracket collapsed before |mu - mu0| <= 1e-10")
    return Crossing(x, None, None, MAX_REFINE, error="refinement did not converge")


def trace_mu_crossings(curve: ContinuationCurve, spec: ProblemSpec, mu0: float) -> TraceResult:
    """Solve mu(xi1) = mu0 at every sign change of the sampled curve.

    Each returned solution is re-verified against p = mu0 + theta.  Samples
    within 1e-8 of ``mu0`` without a sign change are reported as grazing.
    """
    if len(curve) == 0:
        raise ValueError("empty curve")
    xs, f = curve.xi, curve.mu - mu0
    n = len(f)
    crossings, grazing = [], []
    target = spec.with_mu0(mu0)
    on_sample = set()
    for i in range(n):
        if abs(f[i]) <= CROSSING_TOL:
            left = f[i - 1] if i > 0 else None
            right = f[i + 1] if i < n - 1 else None
            if left is not None and right is not None and left * right < 0:
                on_sample.add(i)
                crossings.append(_refine(target, curve, mu0, xs[i - 1], xs[i + 1]))
            else:
                grazing.append(float(xs[i]))
        elif abs(f[i]) < GRAZING_TOL:
            neighbours = [f[j] for j in (i - 1, i + 1) if 0 <= j < n]
            if all(v * f[i] > 0 for v in neighbours):
                grazing.append(float(xs[i]))
    for i in range(n - 1):
        if i in on_sample or (i + 1) in on_sample:
            continue
        if f[i] * f[i + 1] < 0:
            crossings.append(_refine(target, curve, mu0, xs[i], xs[i + 1]))
    for c in crossings:
        if c.ok:
            c.checks = verify_state(target, c.state, k=1.0, xi1=c.xi1)
            c.checks["mu_minus_mu0"] = abs(c.state.mu - mu0)
    crossings.sort(key=lambda c: c.xi1)
    return TraceResult(mu0=float(mu0), crossings=crossings, grazing=grazing)


def count_crossings(curve: ContinuationCurve, level: float) -> int:
    f = curve.mu - level
    return int(np.sum(f[:-1] * f[1:] < 0))


def curve_summary(curve: ContinuationCurve, spec: ProblemSpec | None = None, level: float | None = None) -> CurveSummary:
    """Extrema, tail averages (last 10% of samples per side) and declared limits."""
    if len(curve) < 10:
        raise ValueError("curve_summary needs at least 10 samples")
    xs, mu = curve.xi, curve.mu
    i_min, i_max = int(np.argmin(mu)), int(np.argmax(mu))
    m = max(1, len(mu) // 10)
    summary = CurveSummary(
        mu_min=float(mu[i_min]),
        xi_at_min=float(xs[i_min]),
        mu_max=float(mu[i_max]),
        xi_at_max=float(xs[i_max]),
        tail_low=float(np.mean(mu[:m])),
        tail_high=float(np.mean(mu[-m:])),
    )
    if spec is not None and spec.g.asymptotes is not None:
        from .analysis import declared_limits

        summary.limit_low, summary.limit_high = declared_limits(spec.g, spec.mesh)
    if level is not None:
        summary.level = float(level)
        summary.crossing_count = count_crossings(curve, level)
    return summary
