"""Pure-Python left-looking sparse LU (Gilbert-Peierls) with partial pivoting.

Reference implementation of the kernels in ``_lu_ext.pyx``; it is used when
the compiled extension is unavailable.  Both produce identical factors.

Factor layout (all zero-based, pivot order):
    L  strictly lower triangular, unit diagonal implied, CSC
    U  strictly upper triangular, CSC, diagonal kept separately in ``udiag``
    pinv[i] = pivot position of original row i
"""

from __future__ import annotations

import numpy as np

from ..errors import SingularSystemError


def lu_factor(n, colptr, rowind, values, pivot_tol, abs_tol):
    colptr = colptr.tolist()
    rowind = rowind.tolist()
    values = values.tolist()
    pinv = [-1] * n
    Lp, Li, Lx = [0], [], []
    Up, Ui, Ux = [0], [], []
    udiag = [0.0] * n
    x = [0.0] * n
    mark = [-1] * n

    for k in range(n):
        # symbolic step: rows reachable from column k through the graph of L,
        # collected in topological order by an iterative depth-first search
        topo = []
        for p in range(colptr[k], colptr[k + 1]):
            root = rowind[p]
            if mark[root] == k:
                continue
            mark[root] = k
            stack = [(root, 0)]
            while stack:
                i, pos = stack[-1]
                j = pinv[i]
                if j < 0:
                    stack.pop()
                    topo.append(i)
                    continue
                start, end = Lp[j], Lp[j + 1]
                advanced = False
                q = start + pos
                while q < end:
                    child = Li[q]
                    q += 1
                    if mark[child] != k:
                        mark[child] = k
                        stack[-1] = (i, q - start)
                        stack.append((child, 0))
                        advanced = True
                        break
                if not advanced:
                    stack.pop()
                    topo.append(i)
        topo.reverse()

        # numeric step: sparse triangular solve with the computed columns of L
        for i in topo:
            x[i] = 0.0
        for p in range(colptr[k], colptr[k + 1]):
            x[rowind[p]] += values[p]
        for i in topo:
            j = pinv[i]
            if j < 0:
                continue
            xj = x[i]
            if xj != 0.0:
                for q in range(Lp[j], Lp[j + 1]):
                    x[Li[q]] -= Lx[q] * xj

        # pivot choice among rows not yet pivoted; diagonal preferred
        ipiv = -1
        amax = -1.0
        for i in topo:
            if pinv[i] < 0:
                a = abs(x[i])
                if a > amax:
                    amax = a
                    ipiv = i
            else:
                Ui.append(pinv[i])
                Ux.append(x[i])
        if ipiv < 0 or amax <= abs_tol:
            raise SingularSystemError(k, max(amax, 0.0))
        if pinv[k] < 0 and mark[k] == k and abs(x[k]) >= pivot_tol * amax:
            ipiv = k
        pivot = x[ipiv]
        udiag[k] = pivot
        pinv[ipiv] = k
        for i in topo:
            if pinv[i] < 0:
                Li.append(i)
                Lx.append(x[i] / pivot)
            x[i] = 0.0
        Lp.append(len(Li))
        Up.append(len(Ui))

    pinv_arr = np.asarray(pinv, dtype=np.int64)
    Li_arr = pinv_arr[np.asarray(Li, dtype=np.int64)] if Li else np.zeros(0, dtype=np.int64)
    return (
        np.asarray(Lp, dtype=np.int64),
        Li_arr,
        np.asarray(Lx, dtype=float),
        np.asarray(Up, dtype=np.int64),
        np.asarray(Ui, dtype=np.int64),
        np.asarray(Ux, dtype=float),
        np.asarray(udiag, dtype=float),
        pinv_arr,
    )


def lu_solve(Lp, Li, Lx, Up, Ui, Ux, udiag, rhs):
    """Solve L U y = rhs (rhs already in pivot order)."""
    y = np.array(rhs, dtype=float)
    n = y.size
    for j in range(n):
        s, e = Lp[j], Lp[j + 1]
        if s < e and y[j] != 0.0:
            y[Li[s:e]] -= Lx[s:e] * y[j]
    for j in range(n - 1, -1, -1):
        y[j] /= udiag[j]
        s, e = Up[j], Up[j + 1]
        if s < e and y[j] != 0.0:
            y[Ui[s:e]] -= Ux[s:e] * y[j]
    return y


def lu_solve_transpose(Lp, Li, Lx, Up, Ui, Ux, udiag, rhs):
    """Solve U^T L^T s = rhs."""
    v = np.array(rhs, dtype=float)
    n = v.size
    for j in range(n):
        s, e = Up[j], Up[j + 1]
        if s < e:
            v[j] -= np.dot(Ux[s:e], v[Ui[s:e]])
        v[j] /= udiag[j]
    for j in range(n - 1, -1, -1):
        s, e = Lp[j], Lp[j + 1]
        if s < e:
            v[j] -= np.dot(Lx[s:e], v[Li[s:e]])
    return v
