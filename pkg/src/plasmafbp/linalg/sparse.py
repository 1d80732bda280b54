"""Compressed row storage matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix with sorted, duplicate-free column indices per row."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple

    def __post_init__(self):
        nr, nc = self.shape
        if self.indptr.shape != (nr + 1,) or self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise ValueError("inconsistent row offsets")
        if self.indices.size != self.data.size:
            raise ValueError("indices and values differ in length")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= nc):
            raise ValueError("column index out of range")

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseMatrix":
        """Build from triplets; duplicates are summed, explicit zeros kept."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        nr, nc = shape
        if rows.size and (rows.min() < 0 or rows.max() >= nr or cols.min() < 0 or cols.max() >= nc):
            raise ValueError("triplet index out of range")
        key = rows * nc + cols
        order = np.argsort(key, kind="stable")
        key = key[order]
        vals = vals[order]
        uniq, start = np.unique(key, return_index=True)
        data = np.add.reduceat(vals, start) if vals.size else vals
        r = uniq // nc
        c = uniq % nc
        indptr = np.zeros(nr + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        return cls(np.cumsum(indptr), c.astype(np.int64), data, (int(nr), int(nc)))

    @classmethod
    def from_dense(cls, a) -> "SparseMatrix":
        a = np.asarray(a, dtype=float)
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        i = np.arange(n)
        return cls.from_coo(i, i, np.ones(n), (n, n))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def to_coo(self) -> tuple:
        return self.row_indices(), self.indices.copy(), self.data.copy()

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.row_indices(), self.indices), self.data)
        return out

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise ValueError("dimension mismatch in matvec")
        prod = self.data * x[self.indices]
        return np.bincount(self.row_indices(), weights=prod, minlength=self.shape[0])

    __matmul__ = matvec

    def transpose(self) -> "SparseMatrix":
        r, c, v = self.to_coo()
        return SparseMatrix.from_coo(c, r, v, (self.shape[1], self.shape[0]))

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def permute(self, row_perm, col_perm) -> "SparseMatrix":
        """Return B with B[i, j] = A[row_perm[i], col_perm[j]]."""
        r, c, v = self.to_coo()
        rinv = np.empty(self.shape[0], dtype=np.int64)
        rinv[np.asarray(row_perm)] = np.arange(self.shape[0])
        cinv = np.empty(self.shape[1], dtype=np.int64)
        cinv[np.asarray(col_perm)] = np.arange(self.shape[1])
        return SparseMatrix.from_coo(rinv[r], cinv[c], v, self.shape)

    def to_csc(self) -> tuple:
        """Column-compressed arrays ``(colptr, rowind, values)``."""
        t = self.transpose()
        return t.indptr, t.indices, t.data

    def norm_inf(self) -> float:
        return float(np.max(np.bincount(self.row_indices(), weights=np.abs(self.data), minlength=self.shape[0]), initial=0.0))

    def norm_1(self) -> float:
        return float(np.max(np.bincount(self.indices, weights=np.abs(self.data), minlength=self.shape[1]), initial=0.0))

    def structure_key(self) -> tuple:
        """Hashable fingerprint of the sparsity pattern."""
        return (self.shape, self.indptr.tobytes(), self.indices.tobytes())
