"""Newton solver for the bordered system in (u, b, mu) at fixed k and xi1.

Unknowns are ordered as interior nodal values, then b, then mu; equations
as interior PDE rows, the flux row, then the average row:

    Delta_h u + k g(x, u) - mu - theta = 0        (interior nodes)
    F_h(u, b, mu) = 0                              (zero total flux)
    average(u, b) - xi1 = 0

``F_h`` is the one-sided boundary flux plus the half-cell balance of each
boundary node, which makes the flux condition second-order accurate and
equivalent to the trapezoid mean balance
``mu |D| = sum_w (k g - theta)``.

States are stored as deviations from their own average parameter
(u = xi1 + U), which keeps differences of large nearly-constant fields free
of cancellation error.
"""

from __future__ import annotations

import logging
import math
import weakref
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DivergenceError,
    ExprDomainError,
    MaxIterationsError,
    SingularJacobianError,
    SingularSystemError,
)
from .linalg import BorderedMatrix, SparseMatrix, lu_factor
from .mesh import Mesh
from .model import ProblemSpec

log = logging.getLogger(__name__)

MAX_HALVINGS = 6
DIVERGENCE_FACTOR = 1e6
ILL_CONDITIONED = 1.0 / (100.0 * np.finfo(float).eps)


@dataclass(frozen=True, eq=False)
class AugmentedState:
    """Triple (u, b, mu) at homotopy level ``k`` and average ``xi1``.

    ``U`` and ``beta`` are the deviations u - xi1 and b - xi1.
    """

    U: np.ndarray
    beta: float
    mu: float
    xi1: float
    k: float = 1.0

    @classmethod
    def from_values(cls, u, b: float, mu: float, xi1: float, k: float = 1.0) -> "AugmentedState":
        u = np.asarray(u, dtype=float)
        return cls(U=u - xi1, beta=float(b) - xi1, mu=float(mu), xi1=float(xi1), k=float(k))

    @property
    def u(self) -> np.ndarray:
        return self.xi1 + self.U

    @property
    def b(self) -> float:
        return self.xi1 + self.beta

    @property
    def sup_norm_U(self) -> float:
        """max |u - xi1| over interior and boundary nodes."""
        return float(max(np.max(np.abs(self.U), initial=0.0), abs(self.beta)))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.U, [self.beta, self.mu]])

    def reshifted(self, xi1: float) -> "AugmentedState":
        """Same field expressed relative to a different average parameter."""
        if xi1 == self.xi1:
            return self
        d = self.xi1 - xi1
        return replace(self, U=self.U + d, beta=self.beta + d, xi1=float(xi1))

    def translated(self, xi1: float, k: float | None = None) -> "AugmentedState":
        """Constant-shift predictor: u -> u + (xi1 - self.xi1)."""
        return replace(self, xi1=float(xi1), k=self.k if k is None else float(k))

    def with_k(self, k: float) -> "AugmentedState":
        return replace(self, k=float(k))


@dataclass
class NewtonReport:
    iterations: int
    residual: float
    cond_est: float
    converged: bool
    history: list = field(default_factory=list)

    @property
    def ill_conditioned(self) -> bool:
        return not (self.cond_est <= ILL_CONDITIONED)


# --------------------------------------------------------------------------
# per-mesh workspace
# --------------------------------------------------------------------------

class _Workspace:
    def __init__(self, m: Mesh):
        self.rows, self.cols, self.vals, self.b_coef = m.laplacian_stencil()
        self.fu, self.fb = m.flux_functional()
        self.wb = m.boundary_weights
        self.wb_sum = m.boundary_weight_total
        self.avg_u = m.weights / m.volume
        self.avg_b = self.wb_sum / m.volume
        self.diag = np.arange(m.N)


_workspaces: "weakref.WeakKeyDictionary[Mesh, _Workspace]" = weakref.WeakKeyDictionary()


def _workspace(m: Mesh) -> _Workspace:
    ws = _workspaces.get(m)
    if ws is None:
        ws = _workspaces[m] = _Workspace(m)
    return ws


def _state_arrays(spec: ProblemSpec, s: AugmentedState) -> None:
    if np.shape(s.U) != (spec.mesh.N,):
        raise ValueError(f"state has {np.shape(s.U)} interior values, mesh has {spec.mesh.N}")


def _g_values(spec: ProblemSpec, s: AugmentedState, deriv: bool = False):
    m = spec.mesh
    gi = spec.g.du if deriv else spec.g
    ui = s.xi1 + s.U
    ub = np.full(m.boundary_coords.shape[0], s.xi1 + s.beta)
    try:
        out_i = gi(m.coords, ui)
        out_b = gi(m.boundary_coords, ub)
    except ExprDomainError as exc:
        raise ValueError(f"nonlinearity evaluation failed: {exc}") from exc
    if not (np.all(np.isfinite(out_i)) and np.all(np.isfinite(out_b))):
        raise ValueError("non-finite values in nonlinearity evaluation")
    return out_i, out_b


# --------------------------------------------------------------------------
# residual and Jacobian
# --------------------------------------------------------------------------

def residual(spec: ProblemSpec, s: AugmentedState, k: float, xi1: float) -> np.ndarray:
    """Residual vector of length N + 2 (interior rows, flux row, average row)."""
    _state_arrays(spec, s)
    m = spec.mesh
    f = spec.forcing
    gi, gb = _g_values(spec, s)
    r_int = m.apply_laplacian(s.U, s.beta) + k * gi - s.mu - f.theta_interior
    flux = m.boundary_flux(s.U, s.beta) + float(np.dot(m.boundary_weights, s.mu + f.theta_boundary - k * gb))
    avg = m.average(s.U, s.beta) + (s.xi1 - xi1)
    return np.concatenate([r_int, [flux, avg]])


def jacobian(spec: ProblemSpec, s: AugmentedState, k: float, xi1: float) -> BorderedMatrix:
    """Bordered Jacobian of :func:`residual` with respect to (u, b, mu)."""
    _state_arrays(spec, s)
    m = spec.mesh
    ws = _workspace(m)
    dgi, dgb = _g_values(spec, s, deriv=True)
    A = SparseMatrix.from_coo(
        np.concatenate([ws.rows, ws.diag]),
        np.concatenate([ws.cols, ws.diag]),
        np.concatenate([ws.vals, k * dgi]),
        (m.N, m.N),
    )
    cols = np.column_stack([ws.b_coef, np.full(m.N, -1.0)])
    rows = np.vstack([ws.fu, ws.avg_u])
    corner = np.array(
        [
            [ws.fb - k * float(np.dot(ws.wb, dgb)), ws.wb_sum],
            [ws.avg_b, 0.0],
        ]
    )
    return BorderedMatrix(A, cols, rows, corner)


def _norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def _from_vector(s: AugmentedState, z: np.ndarray, k: float) -> AugmentedState:
    n = s.U.size
    return AugmentedState(U=z[:n].copy(), beta=float(z[n]), mu=float(z[n + 1]), xi1=s.xi1, k=float(k))


def newton_solve(
    spec: ProblemSpec,
    k: float,
    xi1: float,
    initial: AugmentedState,
    tol: float | None = None,
    max_iter: int | None = None,
) -> tuple:
    """Damped Newton iteration; returns ``(state, NewtonReport)``.

    A step is halved (up to six times) while the residual max-norm fails to
    decrease.  Raises MaxIterationsError, SingularJacobianError or
    DivergenceError with the report attached.
    """
    tol = spec.tol if tol is None else tol
    max_iter = spec.max_iter if max_iter is None else max_iter
    if not np.all(np.isfinite(initial.vector())):
        raise ValueError("initial state must be finite")
    s = initial.reshifted(xi1).with_k(k)
    try:
        r = residual(spec, s, k, xi1)
    except ValueError as exc:
        raise DivergenceError(f"initial residual not computable: {exc}") from exc
    rn = _norm(r)
    r0 = max(rn, tol)
    report = NewtonReport(0, rn, math.nan, False, [rn])
    z = s.vector()
    for it in range(max_iter + 1):
        if rn <= tol:
            report.converged = True
            break
        if it == max_iter:
            raise MaxIterationsError(
                f"Newton did not converge in {max_iter} iterations (residual {rn:.3e})", report
            )
        J = jacobian(spec, s, k, xi1).assemble()
        try:
            lu = lu_factor(J)
        except SingularSystemError as exc:
            raise SingularJacobianError(f"singular bordered Jacobian: {exc}", report) from exc
        report.cond_est = lu.cond_est
        dz = lu.solve(-r)
        t = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            trial = _from_vector(s, z + t * dz, k)
            try:
                r_t = residual(spec, trial, k, xi1)
                rn_t = _norm(r_t)
            except ValueError:
                rn_t = math.inf
            if math.isfinite(rn_t):
                accepted = (trial, r_t, rn_t)
                if rn_t < rn:
                    break
            t *= 0.5
        if accepted is None:
            raise DivergenceError("residual is not finite along the Newton direction", report)
        s, r, rn = accepted
        z = s.vector()
        report.iterations = it + 1
        report.residual = rn
        report.history.append(rn)
        if rn > DIVERGENCE_FACTOR * r0:
            raise DivergenceError(f"Newton diverged (residual {rn:.3e} from {r0:.3e})", report)
    report.residual = rn
    if math.isnan(report.cond_est):
        # converged on the predictor; condition still has to be reported
        report.cond_est = _condition(spec, s, k, xi1)
    if report.ill_conditioned:
        log.warning("bordered Jacobian condition estimate %.3e at k=%g, xi1=%g", report.cond_est, k, xi1)
    return s, report


def _condition(spec: ProblemSpec, s: AugmentedState, k: float, xi1: float) -> float:
    try:
        return lu_factor(jacobian(spec, s, k, xi1).assemble()).cond_est
    except SingularSystemError:
        return math.inf


def solve_linear_k0(spec: ProblemSpec, xi1: float, return_report: bool = False):
    """Single bordered solve of the linear (k = 0) problem with mu free."""
    m = spec.mesh
    s0 = AugmentedState(U=np.zeros(m.N), beta=0.0, mu=0.0, xi1=float(xi1), k=0.0)
    r = residual(spec, s0, 0.0, xi1)
    lu = lu_factor(jacobian(spec, s0, 0.0, xi1).assemble())
    s = _from_vector(s0, lu.solve(-r), 0.0)
    rn = _norm(residual(spec, s, 0.0, xi1))
    report = NewtonReport(1, rn, lu.cond_est, rn <= spec.tol, [_norm(r), rn])
    return (s, report) if return_report else s


def mean_balance_gap(spec: ProblemSpec, s: AugmentedState, k: float) -> float:
    """|mu - (k/|D|) * integral of g(x, u)| with boundary nodes at b."""
    m = spec.mesh
    gi, gb = _g_values(spec, s)
    return abs(s.mu - k * m.integrate(gi, gb) / m.volume)


def verify_state(spec: ProblemSpec, s: AugmentedState, k: float | None = None, xi1: float | None = None) -> dict:
    """Maxima of each converged-state invariant, keyed by name."""
    k = s.k if k is None else k
    xi1 = s.xi1 if xi1 is None else xi1
    r = residual(spec, s, k, xi1)
    n = spec.mesh.N
    return {
        "interior": float(np.max(np.abs(r[:n]))),
        "flux": abs(float(r[n])),
        "average": abs(float(r[n + 1])),
        "mean_balance": mean_balance_gap(spec, s, k),
    }


def check_jacobian(spec: ProblemSpec, s: AugmentedState, k: float, xi1: float, directions: int = 20, seed: int = 0) -> float:
    """Worst relative mismatch between J v and central differences of the residual."""
    rng = np.random.default_rng(seed)
    J = jacobian(spec, s, k, xi1)
    z = s.vector()
    worst = 0.0
    for _ in range(directions):
        v = rng.standard_normal(z.size)
        v /= np.linalg.norm(v, np.inf)
        eps = 1e-6 * max(1.0, np.linalg.norm(z, np.inf))
        rp = residual(spec, _from_vector(s, z + eps * v, k), k, xi1)
        rm = residual(spec, _from_vector(s, z - eps * v, k), k, xi1)
        fd = (rp - rm) / (2 * eps)
        jv = J.matvec(v)
        worst = max(worst, float(np.max(np.abs(fd - jv)) / max(1.0, np.max(np.abs(jv)))))
    return worst
