"""Problem data: nonlinearity g(x, u), forcing p = mu0 + theta, problem spec."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import expr as ex
from .mesh import Mesh

PROBE_POINTS = (1e3, 1e6)


# --------------------------------------------------------------------------
# nonlinearity
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """g and g_u evaluated on coordinate arrays of shape (n, dim).

    ``asymptotes`` holds the limits g(x, -inf) and g(x, +inf) as callables of
    the coordinates, when declared.  ``bound`` is a declared sup |g_u|.
    """

    name: str
    func: Callable
    deriv: Callable
    bound: Optional[float] = None
    asymptotes: Optional[tuple] = None
    is_zero: bool = False
    text: Optional[str] = None

    def __call__(self, coords, u) -> np.ndarray:
        return np.asarray(self.func(np.asarray(coords, dtype=float), np.asarray(u, dtype=float)), dtype=float)

    def du(self, coords, u) -> np.ndarray:
        return np.asarray(self.deriv(np.asarray(coords, dtype=float), np.asarray(u, dtype=float)), dtype=float)

    def scaled(self, alpha: float) -> "Nonlinearity":
        asym = None
        if self.asymptotes is not None:
            lo, hi = self.asymptotes
            asym = (lambda c: alpha * lo(c), lambda c: alpha * hi(c))
            if alpha < 0:
                asym = asym[::-1]
        return Nonlinearity(
            name=f"{alpha:g}*{self.name}",
            func=lambda c, u: alpha * self.func(c, u),
            deriv=lambda c, u: alpha * self.deriv(c, u),
            bound=None if self.bound is None else abs(alpha) * self.bound,
            asymptotes=asym,
            is_zero=self.is_zero or alpha == 0,
        )

    def check_declarations(self, coords) -> list:
        """Problems with the declared bound / asymptotes (empty when consistent)."""
        problems = []
        coords = np.asarray(coords, dtype=float)
        if self.bound is not None:
            us = np.linspace(-10.0, 10.0, 201)
            worst = max(float(np.max(np.abs(self.du(coords, np.full(len(coords), u))))) for u in us)
            if worst > self.bound * (1.0 + 1e-9):
                problems.append(f"sampled |g_u| = {worst:.6g} exceeds declared bound {self.bound:.6g}")
        if self.asymptotes is not None:
            lo, hi = self.asymptotes
            for sign, lim in ((-1.0, lo), (1.0, hi)):
                probe = self(coords, np.full(len(coords), sign * 1e6))
                gap = float(np.max(np.abs(probe - lim(coords))))
                if gap > 1e-6:
                    problems.append(f"declared asymptote at {'+' if sign > 0 else '-'}inf off by {gap:.3g}")
        return problems


def _sech2(u):
    t = np.exp(-2.0 * np.abs(u))
    return 4.0 * t / (1.0 + t) ** 2


def _const(val: float) -> Callable:
    return lambda c: np.full(len(c), float(val))


def zero_nonlinearity() -> Nonlinearity:
    z = lambda c, u: np.zeros(np.shape(u))
    return Nonlinearity("zero", z, z, asymptotes=(_const(0.0), _const(0.0)), is_zero=True, text="0")


def tanh_nonlinearity(scale: float = 1.0) -> Nonlinearity:
    """g = scale * tanh(u)."""
    return Nonlinearity(
        name="tanh" if scale == 1.0 else f"{scale:g}*tanh",
        func=lambda c, u: scale * np.tanh(u),
        deriv=lambda c, u: scale * _sech2(u),
        asymptotes=(_const(-scale), _const(scale)),
        text=f"{scale!r}*tanh(u)",
    )


def gaussian_nonlinearity() -> Nonlinearity:
    """g = u * exp(-u^2): odd, vanishing at both infinities."""

    def deriv(c, u):
        return (1.0 - 2.0 * u * u) * np.exp(-u * u)

    return Nonlinearity(
        name="ugauss",
        func=lambda c, u: u * np.exp(-u * u),
        deriv=deriv,
        asymptotes=(_const(0.0), _const(0.0)),
        text="u*exp(-u^2)",
    )


def modulated_tanh(a) -> Nonlinearity:
    """g = a(x) * tanh(u) with ``a`` a number, a callable of coordinates or expression text."""
    if isinstance(a, str):
        e = ex.parse(a, variables=("x", "y"))
        a_fn = lambda c: np.broadcast_to(
            np.asarray(ex.evaluate(e, x=c[:, 0], y=c[:, 1] if c.shape[1] > 1 else None), dtype=float), (len(c),)
        )
        label = a
    elif callable(a):
        a_fn = a
        label = getattr(a, "__name__", "a")
    else:
        amp = float(a)
        a_fn = lambda c: np.full(len(c), amp)
        label = f"{amp:g}"
    return Nonlinearity(
        name=f"({label})*tanh",
        func=lambda c, u: a_fn(c) * np.tanh(u),
        deriv=lambda c, u: a_fn(c) * _sech2(u),
        asymptotes=(lambda c: -a_fn(c), lambda c: a_fn(c)),
        text=f"({label})*tanh(u)" if isinstance(a, str) else None,
    )


BUILTINS = {
    "zero": zero_nonlinearity,
    "tanh": tanh_nonlinearity,
    "ugauss": gaussian_nonlinearity,
}


def _coord_env(c: np.ndarray) -> dict:
    env = {"x": c[:, 0]}
    if c.shape[1] > 1:
        env["y"] = c[:, 1]
    return env


def expression_nonlinearity(text: str, dim: int = 1, bound=None, asymptotes=None) -> Nonlinearity:
    """Nonlinearity from expression text in x, (y), u.

    ``asymptotes`` may be a pair of numbers (x-independent limits).
    """
    allowed = ("x", "u") if dim == 1 else ("x", "y", "u")
    e = ex.parse(text, variables=allowed)
    dfn = ex.d_du(e)

    def func(c, u):
        return np.broadcast_to(np.asarray(ex.evaluate(e, u=u, **_coord_env(c)), dtype=float), np.shape(u))

    def deriv(c, u):
        return np.broadcast_to(np.asarray(dfn(u=u, **_coord_env(c)), dtype=float), np.shape(u))

    asym = None
    if asymptotes is not None:
        lo, hi = asymptotes
        asym = (_const(lo), _const(hi))
    return Nonlinearity(
        name=text, func=func, deriv=deriv, bound=bound, asymptotes=asym, is_zero=ex.is_zero(e), text=text
    )


def nonlinearity_from_text(text: str, dim: int = 1, bound=None, asymptotes=None) -> Nonlinearity:
    """Builtin catalog name or expression text."""
    key = text.strip()
    if key in BUILTINS:
        g = BUILTINS[key]()
        if bound is not None or asymptotes is not None:
            g = Nonlinearity(
                g.name, g.func, g.deriv,
                bound=bound if bound is not None else g.bound,
                asymptotes=(_const(asymptotes[0]), _const(asymptotes[1])) if asymptotes is not None else g.asymptotes,
                is_zero=g.is_zero, text=g.text,
            )
        return g
    return expression_nonlinearity(key, dim=dim, bound=bound, asymptotes=asymptotes)


def estimate_M(g: Nonlinearity, m: Mesh, u_box: tuple = (-10.0, 10.0), samples: int = 201) -> float:
    """Sampled sup of |g_u| over mesh nodes and states in ``u_box``.

    Returns the declared bound unchanged when one is present.  Otherwise the
    grid maximum is polished by a bounded scalar search around the best
    sample; the result is a lower estimate of the true supremum.
    """
    if g.bound is not None:
        return float(g.bound)
    if samples < 100:
        raise ValueError("estimate_M needs at least 100 samples")
    lo, hi = map(float, u_box)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError("u_box must be a finite interval")
    coords = m.all_coords
    us = np.concatenate([np.linspace(lo, hi, samples), [-1e6, -1e3, 1e3, 1e6]])
    best, best_u, best_node = -1.0, 0.0, 0
    for u in us:
        vals = np.abs(g.du(coords, np.full(len(coords), u)))
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_u, best_node = float(vals[i]), float(u), i
    if lo <= best_u <= hi:
        step = (hi - lo) / (samples - 1)
        c = coords[best_node : best_node + 1]
        a, b = max(lo, best_u - step), min(hi, best_u + step)
        res = minimize_scalar(
            lambda t: -abs(float(g.du(c, np.array([t]))[0])),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-10},
        )
        best = max(best, -float(res.fun))
    return best


# --------------------------------------------------------------------------
# forcing
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Forcing:
    """p = mu0 + theta sampled on every mesh node (interior first, then boundary)."""

    mesh: Mesh = field(repr=False)
    p: np.ndarray = field(repr=False)  # all-node samples
    mu0: float = 0.0
    theta: np.ndarray = field(repr=False, default=None)  # all-node samples

    @property
    def theta_interior(self) -> np.ndarray:
        return self.theta[self.mesh.interior_index]

    @property
    def theta_boundary(self) -> np.ndarray:
        return self.theta[self.mesh.boundary_index]

    def weighted_theta_sum(self) -> float:
        """Quadrature sum of theta (common weight times an exact relative sum)."""
        w0, c = _relative_weights(self.mesh)
        return w0 * _weighted_sum(c, self.theta)


def _weighted_sum(w: np.ndarray, f: np.ndarray) -> float:
    return math.fsum((w * f).tolist())


def _relative_weights(m: Mesh) -> tuple:
    """All-node weights as ``w0 * c`` with ``c`` in {1, 1/2, 1/4} (exact)."""
    w = np.empty(m.n_nodes)
    w[m.interior_index] = m.weights
    w[m.boundary_index] = m.boundary_weights
    w0 = float(np.max(w))
    return w0, w / w0


def decompose_forcing(m: Mesh, p) -> Forcing:
    """Split all-node samples ``p`` into the quadrature mean and a zero-mean part.

    The zero-mean part is placed on a fixed-point grid (quantum about 2^-50
    of its largest entry) so that every product with the relative weights is
    exact; the final correction then makes the weighted sum exactly zero in
    real arithmetic, not just to rounding.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (m.n_nodes,):
        raise ValueError(f"forcing needs {m.n_nodes} nodal samples, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("forcing samples must be finite")
    w0, c = _relative_weights(m)
    C = math.fsum(c.tolist())
    mu0 = _weighted_sum(c, p) / C
    theta = p - mu0
    scale = float(np.max(np.abs(theta)))
    if scale == 0.0:
        return Forcing(mesh=m, p=p, mu0=mu0, theta=np.zeros_like(p))
    q = 2.0 ** (math.floor(math.log2(scale)) - 50)
    theta = np.round(theta / q) * q
    for _ in range(3):
        s = _weighted_sum(c, theta)
        if s == 0.0:
            break
        theta = np.round((theta - s / C) / q) * q
    # every c*theta is a multiple of q/4, so this single correction is exact
    j = m.interior_index[int(np.argmax(np.abs(theta[m.interior_index])))]
    theta[j] -= _weighted_sum(c, theta)
    return Forcing(mesh=m, p=p, mu0=mu0, theta=theta)


def sample(m: Mesh, f) -> np.ndarray:
    """All-node samples of ``f`` (callable of coords, expression text, or number)."""
    coords = m.all_coords
    if callable(f):
        return np.broadcast_to(np.asarray(f(coords), dtype=float), (m.n_nodes,)).copy()
    if isinstance(f, str):
        allowed = ("x",) if m.dim == 1 else ("x", "y")
        e = ex.parse(f, variables=allowed)
        return np.broadcast_to(np.asarray(ex.evaluate(e, **_coord_env(coords)), dtype=float), (m.n_nodes,)).copy()
    return np.full(m.n_nodes, float(f))


def forcing_from_parts(m: Mesh, mu0: float, theta) -> Forcing:
    """Forcing from a prescribed mean and a fluctuation (re-deflated)."""
    th = decompose_forcing(m, sample(m, theta))
    return Forcing(mesh=m, p=mu0 + th.theta, mu0=float(mu0), theta=th.theta)


# --------------------------------------------------------------------------
# problem specification
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProblemSpec:
    mesh: Mesh
    g: Nonlinearity
    forcing: Forcing
    tol: float = 1e-10
    max_iter: int = 25
    dk: float = 0.1
    dk_min: float = 1e-4
    xi_min: float = -5.0
    xi_max: float = 5.0
    xi_step: float = 0.1
    anchor: Optional[float] = None

    def __post_init__(self):
        if not (self.tol > 0 and self.max_iter > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.dk <= 1) or not (0 < self.dk_min <= self.dk):
            raise ValueError("need 0 < dk_min <= dk <= 1")
        if not self.xi_step > 0:
            raise ValueError("xi step must be positive")
        if not self.xi_min < self.xi_max:
            raise ValueError("need xi_min < xi_max")
        if self.forcing.mesh is not self.mesh:
            raise ValueError("forcing was sampled on a different mesh")

    @property
    def mu0(self) -> float:
        return self.forcing.mu0

    def with_mu0(self, mu0: float) -> "ProblemSpec":
        f = Forcing(mesh=self.mesh, p=mu0 + self.forcing.theta, mu0=float(mu0), theta=self.forcing.theta)
        return self.replace(forcing=f)

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)


def make_spec(mesh: Mesh, g: Nonlinearity, theta=0.0, mu0: float = 0.0, **controls) -> ProblemSpec:
    """Convenience constructor: p = mu0 + theta with theta given as a function/text/number."""
    return ProblemSpec(mesh=mesh, g=g, forcing=forcing_from_parts(mesh, mu0, theta), **controls)
