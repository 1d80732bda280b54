"""Inverse-iteration eigensolvers for the discrete Dirichlet Laplacian.

``eig_smallest_dirichlet`` returns the lowest Dirichlet eigenvalues, and
``eig_c0`` the best Poincare constant over zero-mean fields that vanish on
the boundary.  The latter is a constrained problem: each inverse step solves
the bordered system ``[A 1; 1^T 0] [y; nu] = [v; 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EigenNonConvergence
from ..mesh import Mesh
from .factor import lu_factor
from .sparse import SparseMatrix

MAX_STEPS = 500
RESIDUAL_TOL = 1e-8
RAYLEIGH_RTOL = 1e-10
SEED = 20240611


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray  # one column per eigenvalue, unit 2-norm
    iterations: tuple
    residuals: tuple


def dirichlet_matrix(m: Mesh) -> SparseMatrix:
    """-Laplacian on interior nodes with zero boundary values."""
    r, c, v, _ = m.laplacian_stencil()
    return SparseMatrix.from_coo(r, c, -v, (m.N, m.N))


def _start_vector(n: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    return v / np.linalg.norm(v)


def eig_smallest_dirichlet(m: Mesh, count: int = 2, shift: float = 0.0, seed: int = SEED) -> EigenResult:
    """Lowest ``count`` eigenvalues of -Delta_h by deflated inverse iteration.

    Convergence is declared once ``||A v - lam v|| <= 1e-8 ||v||``.
    """
    A = dirichlet_matrix(m)
    n = m.N
    if shift:
        i = np.arange(n)
        A_s = SparseMatrix.from_coo(*[np.concatenate(p) for p in zip(A.to_coo(), (i, i, np.full(n, -shift)))], (n, n))
    else:
        A_s = A
    lu = lu_factor(A_s)
    found: list = []
    iters, resids = [], []
    for idx in range(count):
        v = _start_vector(n, seed + idx)
        res = np.inf
        lam = 0.0
        for step in range(1, MAX_STEPS + 1):
            for q in found:
                v -= (q @ v) * q
            y = lu.solve(v)
            for q in found:
                y -= (q @ y) * q
            v = y / np.linalg.norm(y)
            Av = A @ v
            lam = float(v @ Av)
            res = float(np.linalg.norm(Av - lam * v))
            if res <= RESIDUAL_TOL:
                break
        else:
            raise EigenNonConvergence(res, MAX_STEPS)
        found.append(v)
        iters.append(step)
        resids.append(res)
    vals = np.array([float(q @ (A @ q)) for q in found])
    order = np.argsort(vals)
    return EigenResult(vals[order], np.column_stack(found)[:, order], tuple(np.array(iters)[order]), tuple(np.array(resids)[order]))


def eig_c0(m: Mesh, seed: int = SEED, return_vector: bool = False):
    """Minimum Rayleigh quotient of -Delta_h over zero-mean interior fields."""
    A = dirichlet_matrix(m)
    n = m.N
    w = m.weights / np.linalg.norm(m.weights)
    r, c, v = A.to_coo()
    i = np.arange(n)
    B = SparseMatrix.from_coo(
        np.concatenate([r, i, np.full(n, n)]),
        np.concatenate([c, np.full(n, n), i]),
        np.concatenate([v, w, w]),
        (n + 1, n + 1),
    )
    lu = lu_factor(B)
    x = _start_vector(n, seed)
    x -= (w @ x) * w
    x /= np.linalg.norm(x)
    rq_old = np.inf
    res = np.inf
    for step in range(1, MAX_STEPS + 1):
        y = lu.solve(np.append(x, 0.0))[:n]
        y -= (w @ y) * w
        x = y / np.linalg.norm(y)
        x -= (w @ x) * w
        Ax = A @ x
        rq = float(x @ Ax) / float(x @ x)
        g = Ax - rq * x
        res = float(np.linalg.norm(g - (w @ g) * w))
        if abs(rq - rq_old) < RAYLEIGH_RTOL * abs(rq) and res <= RESIDUAL_TOL:
            break
        rq_old = rq
    else:
        raise EigenNonConvergence(res, MAX_STEPS)
    if return_vector:
        return rq, x
    return rq
