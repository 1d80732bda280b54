"""Sparse LU factorization with pivoting and condition estimation.

The elimination kernels come from the compiled extension when it is
importable, otherwise from the pure-Python module.  Setting the environment
variable ``PLASMAFBP_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import _lu_py
from .sparse import SparseMatrix

log = logging.getLogger(__name__)

_kernels = {"python": _lu_py}
if os.environ.get("PLASMAFBP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _lu_ext

        _kernels["compiled"] = _lu_ext
    except ImportError:  # extension not built
        log.debug("compiled LU kernels unavailable; using pure-Python fallback")

BACKEND = "compiled" if "compiled" in _kernels else "python"
AVAILABLE_BACKENDS = tuple(sorted(_kernels))

SINGULAR_RTOL = 1e-14
DEFAULT_PIVOT_TOL = 0.1

_ordering_store: dict = {}


def fill_reducing_order(A: SparseMatrix) -> np.ndarray:
    """Symmetric permutation: reverse Cuthill-McKee with dense nodes last.

    A node whose degree in the symmetrized pattern exceeds ``2*sqrt(n)``
    (the bordered rows and columns) is ordered after all sparse nodes so
    that its fill is confined to the trailing rows of the factors.
    """
    key = A.structure_key()
    hit = _ordering_store.get(key)
    if hit is not None:
        return hit
    n = A.shape[0]
    r, c, _ = A.to_coo()
    off = r != c
    rr = np.concatenate([r[off], c[off]])
    cc = np.concatenate([c[off], r[off]])
    deg = np.bincount(rr, minlength=n)
    dense = deg > max(16.0, 2.0 * math.sqrt(n))
    sparse_nodes = np.flatnonzero(~dense)
    dense_nodes = np.flatnonzero(dense)
    dense_nodes = dense_nodes[np.argsort(deg[dense_nodes], kind="stable")]
    if sparse_nodes.size:
        keep = ~dense[rr] & ~dense[cc]
        sub = np.full(n, -1, dtype=np.int64)
        sub[sparse_nodes] = np.arange(sparse_nodes.size)
        g = csr_matrix(
            (np.ones(int(keep.sum())), (sub[rr[keep]], sub[cc[keep]])),
            shape=(sparse_nodes.size, sparse_nodes.size),
        )
        rcm = reverse_cuthill_mckee(g, symmetric_mode=True)
        sparse_nodes = sparse_nodes[rcm]
    perm = np.concatenate([sparse_nodes, dense_nodes]).astype(np.int64)
    if len(_ordering_store) > 64:
        _ordering_store.clear()
    _ordering_store[key] = perm
    return perm


class LUFactor:
    """Factorization ``P Q^T A Q = L U`` usable for repeated solves.

    Attributes
    ----------
    rcond : float
        Estimated reciprocal 1-norm condition number.
    """

    def __init__(self, A: SparseMatrix, perm, parts, backend: str):
        self.shape = A.shape
        self.perm = perm
        self.backend = backend
        (self.Lp, self.Li, self.Lx, self.Up, self.Ui, self.Ux, self.udiag, self.pinv) = parts
        self._kern = _kernels[backend]
        self.norm1 = A.norm_1()
        self.rcond = self._estimate_rcond()

    @property
    def cond_est(self) -> float:
        return math.inf if self.rcond == 0 else 1.0 / self.rcond

    @property
    def near_singular(self) -> bool:
        """True when the condition estimate exceeds 1/(100 * machine epsilon)."""
        return self.cond_est > 1.0 / (100.0 * np.finfo(float).eps)

    @property
    def fill(self) -> int:
        return int(self.Li.size + self.Ui.size + self.udiag.size)

    def solve(self, rhs, trans: bool = False) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        n = self.shape[0]
        if rhs.shape != (n,):
            raise ValueError("right-hand side has wrong length")
        k = self._kern
        c = rhs[self.perm]
        parts = (self.Lp, self.Li, self.Lx, self.Up, self.Ui, self.Ux, self.udiag)
        if not trans:
            z = np.empty(n)
            z[self.pinv] = c
            y = k.lu_solve(*parts, z)
        else:
            s = k.lu_solve_transpose(*parts, c)
            y = s[self.pinv]
        x = np.empty(n)
        x[self.perm] = y
        return x

    def _estimate_rcond(self) -> float:
        """Hager-Higham estimate of ||A^-1||_1, combined with ||A||_1."""
        n = self.shape[0]
        if self.norm1 == 0.0:
            return 0.0
        x = np.full(n, 1.0 / n)
        est = 0.0
        j_old = -1
        for it in range(5):
            y = self.solve(x)
            est_new = float(np.abs(y).sum())
            if it > 0 and est_new <= est:
                break
            est = est_new
            xi = np.where(y >= 0, 1.0, -1.0)
            z = self.solve(xi, trans=True)
            j = int(np.argmax(np.abs(z)))
            if it > 0 and (abs(z[j]) <= float(z @ x) or j == j_old):
                break
            x = np.zeros(n)
            x[j] = 1.0
            j_old = j
        i = np.arange(n)
        alt = np.where(i % 2 == 0, 1.0, -1.0) * (1.0 + i / max(n - 1, 1))
        est = max(est, 2.0 * float(np.abs(self.solve(alt)).sum()) / (3.0 * n))
        if not math.isfinite(est) or est == 0.0:
            return 0.0
        return 1.0 / (self.norm1 * est)


def lu_factor(
    A: SparseMatrix,
    perm=None,
    pivot_tol: float = DEFAULT_PIVOT_TOL,
    backend: str | None = None,
) -> LUFactor:
    """Factor a square sparse matrix with threshold partial pivoting.

    Raises SingularSystemError when no admissible pivot exceeds
    ``1e-14 * ||A||_inf``.
    """
    n, m = A.shape
    if n != m:
        raise ValueError("matrix must be square")
    backend = backend or BACKEND
    if backend not in _kernels:
        raise ValueError(f"backend {backend!r} not available (have {AVAILABLE_BACKENDS})")
    if perm is None:
        perm = fill_reducing_order(A)
    perm = np.asarray(perm, dtype=np.int64)
    B = A.permute(perm, perm)
    colptr, rowind, vals = B.to_csc()
    abs_tol = SINGULAR_RTOL * A.norm_inf()
    parts = _kernels[backend].lu_factor(
        n,
        np.ascontiguousarray(colptr, dtype=np.int64),
        np.ascontiguousarray(rowind, dtype=np.int64),
        np.ascontiguousarray(vals, dtype=float),
        float(pivot_tol),
        float(abs_tol),
    )
    return LUFactor(A, perm, parts, backend)
