# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled left-looking sparse LU kernels; mirrors ``_lu_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

from ..errors import SingularSystemError

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef class _Growable:
    """Append-only (index, value) storage with amortized doubling."""
    cdef public object idx_arr
    cdef public object val_arr
    cdef idx_t[::1] idx
    cdef double[::1] val
    cdef public Py_ssize_t size

    def __init__(self, Py_ssize_t capacity):
        capacity = max(capacity, 16)
        self.idx_arr = np.empty(capacity, dtype=np.int64)
        self.val_arr = np.empty(capacity, dtype=np.float64)
        self.idx = self.idx_arr
        self.val = self.val_arr
        self.size = 0

    cdef void reserve(self, Py_ssize_t extra):
        cdef Py_ssize_t need = self.size + extra
        cdef Py_ssize_t cap = self.idx.shape[0]
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        new_i = np.empty(cap, dtype=np.int64)
        new_v = np.empty(cap, dtype=np.float64)
        new_i[:self.size] = self.idx_arr[:self.size]
        new_v[:self.size] = self.val_arr[:self.size]
        self.idx_arr = new_i
        self.val_arr = new_v
        self.idx = new_i
        self.val = new_v


def lu_factor(Py_ssize_t n, idx_t[::1] colptr, idx_t[::1] rowind, double[::1] values,
              double pivot_tol, double abs_tol):
    cdef Py_ssize_t nnz = colptr[n]
    cdef _Growable L = _Growable(4 * nnz + n)
    cdef _Growable U = _Growable(4 * nnz + n)
    Lp_arr = np.zeros(n + 1, dtype=np.int64)
    Up_arr = np.zeros(n + 1, dtype=np.int64)
    udiag_arr = np.zeros(n, dtype=np.float64)
    pinv_arr = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] Lp = Lp_arr
    cdef idx_t[::1] Up = Up_arr
    cdef double[::1] udiag = udiag_arr
    cdef idx_t[::1] pinv = pinv_arr
    cdef double[::1] x = np.zeros(n, dtype=np.float64)
    cdef idx_t[::1] mark = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] topo = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] stack_node = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] stack_pos = np.empty(n, dtype=np.int64)

    cdef Py_ssize_t k, p, q, top, ntopo, sp, i, j, child, start, end, ipiv, t
    cdef double xj, a, amax, pivot
    cdef bint advanced

    for k in range(n):
        # reach of column k in the graph of L, post-order into topo[0:ntopo]
        ntopo = 0
        for p in range(colptr[k], colptr[k + 1]):
            i = rowind[p]
            if mark[i] == k:
                continue
            mark[i] = k
            sp = 0
            stack_node[0] = i
            stack_pos[0] = 0
            while sp >= 0:
                i = stack_node[sp]
                j = pinv[i]
                if j < 0:
                    topo[ntopo] = i
                    ntopo += 1
                    sp -= 1
                    continue
                start = Lp[j]
                end = Lp[j + 1]
                q = start + stack_pos[sp]
                advanced = False
                while q < end:
                    child = L.idx[q]
                    q += 1
                    if mark[child] != k:
                        mark[child] = k
                        stack_pos[sp] = q - start
                        sp += 1
                        stack_node[sp] = child
                        stack_pos[sp] = 0
                        advanced = True
                        break
                if not advanced:
                    topo[ntopo] = i
                    ntopo += 1
                    sp -= 1

        # numeric solve, processing topo in reverse post-order
        for p in range(colptr[k], colptr[k + 1]):
            x[rowind[p]] += values[p]
        for t in range(ntopo - 1, -1, -1):
            i = topo[t]
            j = pinv[i]
            if j < 0:
                continue
            xj = x[i]
            if xj != 0.0:
                for q in range(Lp[j], Lp[j + 1]):
                    x[L.idx[q]] -= L.val[q] * xj

        ipiv = -1
        amax = -1.0
        U.reserve(ntopo)
        for t in range(ntopo - 1, -1, -1):
            i = topo[t]
            if pinv[i] < 0:
                a = fabs(x[i])
                if a > amax:
                    amax = a
                    ipiv = i
            else:
                U.idx[U.size] = pinv[i]
                U.val[U.size] = x[i]
                U.size += 1
        if ipiv < 0 or amax <= abs_tol:
            for t in range(ntopo):
                x[topo[t]] = 0.0
            raise SingularSystemError(k, max(amax, 0.0))
        if pinv[k] < 0 and mark[k] == k and fabs(x[k]) >= pivot_tol * amax:
            ipiv = k
        pivot = x[ipiv]
        udiag[k] = pivot
        pinv[ipiv] = k
        L.reserve(ntopo)
        for t in range(ntopo - 1, -1, -1):
            i = topo[t]
            if pinv[i] < 0:
                L.idx[L.size] = i
                L.val[L.size] = x[i] / pivot
                L.size += 1
            x[i] = 0.0
        Lp[k + 1] = L.size
        Up[k + 1] = U.size

    Li = pinv_arr[L.idx_arr[:L.size]]
    return (Lp_arr, Li, L.val_arr[:L.size].copy(), Up_arr, U.idx_arr[:U.size].copy(),
            U.val_arr[:U.size].copy(), udiag_arr, pinv_arr)


def lu_solve(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, idx_t[::1] Up, idx_t[::1] Ui,
             double[::1] Ux, double[::1] udiag, rhs):
    out = np.array(rhs, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t j, q
    cdef double yj
    for j in range(n):
        yj = y[j]
        if yj != 0.0:
            for q in range(Lp[j], Lp[j + 1]):
                y[Li[q]] -= Lx[q] * yj
    for j in range(n - 1, -1, -1):
        y[j] /= udiag[j]
        yj = y[j]
        if yj != 0.0:
            for q in range(Up[j], Up[j + 1]):
                y[Ui[q]] -= Ux[q] * yj
    return out


def lu_solve_transpose(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, idx_t[::1] Up, idx_t[::1] Ui,
                       double[::1] Ux, double[::1] udiag, rhs):
    out = np.array(rhs, dtype=np.float64)
    cdef double[::1] v = out
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t j, q
    cdef double s
    for j in range(n):
        s = v[j]
        for q in range(Up[j], Up[j + 1]):
            s -= Ux[q] * v[Ui[q]]
        v[j] = s / udiag[j]
    for j in range(n - 1, -1, -1):
        s = v[j]
        for q in range(Lp[j], Lp[j + 1]):
            s -= Lx[q] * v[Li[q]]
        v[j] = s
    return out
