"""Sparse block bordered by two dense rows and two dense columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix


@dataclass(frozen=True, eq=False)
class BorderedMatrix:
    """``[[A, C], [R, D]]`` with A sparse N x N, C N x 2, R 2 x N, D 2 x 2."""

    A: SparseMatrix
    cols: np.ndarray
    rows: np.ndarray
    corner: np.ndarray

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("interior block must be square")
        if self.cols.shape != (n, 2) or self.rows.shape != (2, n) or self.corner.shape != (2, 2):
            raise ValueError("border blocks inconsistent with interior block")

    @property
    def size(self) -> int:
        return self.A.shape[0] + 2

    def assemble(self) -> SparseMatrix:
        """Full (N+2) x (N+2) matrix; exact zeros in the borders are dropped."""
        n = self.A.shape[0]
        r, c, v = self.A.to_coo()
        ci, cj = np.nonzero(self.cols)
        ri, rj = np.nonzero(self.rows)
        di, dj = np.nonzero(self.corner)
        return SparseMatrix.from_coo(
            np.concatenate([r, ci, n + ri, n + di]),
            np.concatenate([c, n + cj, rj, n + dj]),
            np.concatenate([v, self.cols[ci, cj], self.rows[ri, rj], self.corner[di, dj]]),
            (n + 2, n + 2),
        )

    def matvec(self, z) -> np.ndarray:
        n = self.A.shape[0]
        z = np.asarray(z, dtype=float)
        top = self.A @ z[:n] + self.cols @ z[n:]
        bottom = self.rows @ z[:n] + self.corner @ z[n:]
        return np.concatenate([top, bottom])
