"""Uniform finite-difference meshes on an interval or a rectangle.

Fields are stored as interior nodal values plus one boundary constant ``b``.
The interior stencil and the boundary flux are built as a compatible pair:
summing ``h * laplacian`` over the interior telescopes exactly into the
flux.  Volume quadrature is the trapezoid rule over all nodes, i.e. interior
weight ``h`` (``hx*hy``) plus half cells on edges and quarter cells on
rectangle corners, so ``volume`` equals |D| exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh"]


@dataclass(frozen=True, eq=False)
class Mesh:
    kind: str
    lengths: tuple
    counts: tuple
    coords: np.ndarray = field(repr=False)  # interior node coordinates, (N, dim)
    boundary_coords: np.ndarray = field(repr=False)  # (Nb, dim)
    interior_index: np.ndarray = field(repr=False)  # positions in the flat all-node array
    boundary_index: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)  # interior quadrature weights
    boundary_weights: np.ndarray = field(repr=False)  # half / quarter cells

    # -- construction -----------------------------------------------------

    @classmethod
    def interval(cls, L: float, n: int) -> "Mesh":
        """Interval (-L, L) split into ``n`` cells; nodes x_j = -L + j*h."""
        if not (L > 0 and math.isfinite(L)):
            raise ValueError("half-length L must be positive and finite")
        if int(n) != n or n < 4:
            raise ValueError("interval mesh needs n >= 4 subdivisions")
        n = int(n)
        h = 2.0 * L / n
        x = -L + h * np.arange(n + 1)
        x[-1] = L
        interior = np.arange(1, n)
        boundary = np.array([0, n])
        return cls(
            kind="interval",
            lengths=(float(L),),
            counts=(n,),
            coords=x[interior].reshape(-1, 1),
            boundary_coords=x[boundary].reshape(-1, 1),
            interior_index=interior,
            boundary_index=boundary,
            weights=np.full(n - 1, h),
            boundary_weights=np.full(2, 0.5 * h),
        )

    @classmethod
    def rectangle(cls, Lx: float, Ly: float, nx: int, ny: int) -> "Mesh":
        """Rectangle (-Lx/2, Lx/2) x (-Ly/2, Ly/2) with an nx-by-ny cell grid."""
        for val in (Lx, Ly):
            if not (val > 0 and math.isfinite(val)):
                raise ValueError("side lengths must be positive and finite")
        if int(nx) != nx or int(ny) != ny or nx < 4 or ny < 4:
            raise ValueError("rectangle mesh needs nx, ny >= 4")
        nx, ny = int(nx), int(ny)
        hx, hy = Lx / nx, Ly / ny
        xs = -0.5 * Lx + hx * np.arange(nx + 1)
        ys = -0.5 * Ly + hy * np.arange(ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        flat = np.column_stack([X.ravel(), Y.ravel()])
        ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        on_x = (ii == 0) | (ii == nx)
        on_y = (jj == 0) | (jj == ny)
        is_b = on_x | on_y
        interior = np.flatnonzero(~is_b)
        boundary = np.flatnonzero(is_b)
        bw = np.where(on_x[boundary] & on_y[boundary], 0.25, 0.5) * hx * hy
        return cls(
            kind="rectangle",
            lengths=(float(Lx), float(Ly)),
            counts=(nx, ny),
            coords=flat[interior],
            boundary_coords=flat[boundary],
            interior_index=interior,
            boundary_index=boundary,
            weights=np.full(interior.size, hx * hy),
            boundary_weights=bw,
        )

    # -- geometry ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def N(self) -> int:
        """Number of interior nodes (unknown nodal values)."""
        return self.coords.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.N + self.boundary_coords.shape[0]

    @property
    def spacing(self) -> tuple:
        if self.kind == "interval":
            return (2.0 * self.lengths[0] / self.counts[0],)
        return (self.lengths[0] / self.counts[0], self.lengths[1] / self.counts[1])

    @property
    def h(self) -> float:
        """Largest grid spacing."""
        return max(self.spacing)

    @property
    def volume(self) -> float:
        """Discrete volume |D|_h (trapezoid: equals the exact |D|)."""
        return math.fsum(self.weights) + math.fsum(self.boundary_weights)

    @property
    def all_coords(self) -> np.ndarray:
        out = np.empty((self.n_nodes, self.dim))
        out[self.interior_index] = self.coords
        out[self.boundary_index] = self.boundary_coords
        return out

    @property
    def boundary_weight_total(self) -> float:
        return math.fsum(self.boundary_weights)

    def split(self, nodal: np.ndarray) -> tuple:
        """Split an all-node array into (interior, boundary) parts."""
        nodal = np.asarray(nodal, dtype=float)
        if nodal.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} nodal values, got {nodal.shape}")
        return nodal[self.interior_index], nodal[self.boundary_index]

    def full_field(self, u: np.ndarray, b: float) -> np.ndarray:
        u = self._check(u)
        out = np.empty(self.n_nodes)
        out[self.interior_index] = u
        out[self.boundary_index] = b
        return out

    def _check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.N,):
            raise ValueError(f"field has shape {u.shape}, mesh has {self.N} interior nodes")
        return u

    def _grid(self, u: np.ndarray, b: float) -> np.ndarray:
        nx, ny = self.counts
        return self.full_field(u, b).reshape(nx + 1, ny + 1)

    # -- discrete operators ----------------------------------------------

    def apply_laplacian(self, u, b: float) -> np.ndarray:
        """3-point / 5-point second difference at every interior node."""
        u = self._check(u)
        if self.kind == "interval":
            (h,) = self.spacing
            ue = np.concatenate(([b], u, [b]))
            return (ue[2:] - 2.0 * ue[1:-1] + ue[:-2]) / (h * h)
        hx, hy = self.spacing
        G = self._grid(u, b)
        c = G[1:-1, 1:-1]
        lap = (G[2:, 1:-1] - 2.0 * c + G[:-2, 1:-1]) / (hx * hx) + (
            G[1:-1, 2:] - 2.0 * c + G[1:-1, :-2]
        ) / (hy * hy)
        return lap.ravel()

    def boundary_flux(self, u, b: float) -> float:
        """Outward one-sided normal differences summed along the boundary."""
        u = self._check(u)
        if self.kind == "interval":
            (h,) = self.spacing
            return ((b - u[-1]) - (u[0] - b)) / h
        hx, hy = self.spacing
        G = self._grid(u, b)
        sx = math.fsum((b - G[1, 1:-1]).tolist() + (b - G[-2, 1:-1]).tolist()) * hy / hx
        sy = math.fsum((b - G[1:-1, 1]).tolist() + (b - G[1:-1, -2]).tolist()) * hx / hy
        return sx + sy

    def interior_sum(self, f) -> float:
        """Sum of w_i * f_i over interior nodes."""
        return float(np.dot(self.weights, self._check(f)))

    def integrate(self, f_interior, f_boundary) -> float:
        """Trapezoid integral from interior values and boundary-node values."""
        fb = np.broadcast_to(np.asarray(f_boundary, dtype=float), self.boundary_weights.shape)
        return float(np.dot(self.weights, self._check(f_interior)) + np.dot(self.boundary_weights, fb))

    def average(self, u, b: float) -> float:
        """Quadrature mean of the field whose boundary nodes carry ``b``."""
        return self.integrate(u, b) / self.volume

    # -- matrices -------------------------------------------------------------

    def laplacian_stencil(self) -> tuple:
        """Interior Laplacian in coordinate form.

        Returns ``(rows, cols, vals, b_coef)`` where the triplets describe the
        interior-interior couplings and ``b_coef[i]`` is the coefficient that
        multiplies the boundary value in row ``i``.
        """
        N = self.N
        if self.kind == "interval":
            (h,) = self.spacing
            i = np.arange(N)
            rows = np.concatenate([i, i[1:], i[:-1]])
            cols = np.concatenate([i, i[:-1], i[1:]])
            vals = np.concatenate([np.full(N, -2.0 / h**2), np.full(2 * (N - 1), 1.0 / h**2)])
            b_coef = np.zeros(N)
            b_coef[0] += 1.0 / h**2
            b_coef[-1] += 1.0 / h**2
            return rows, cols, vals, b_coef
        nx, ny = self.counts
        hx, hy = self.spacing
        mx, my = nx - 1, ny - 1
        idx = np.arange(N).reshape(mx, my)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [np.full(N, -2.0 / hx**2 - 2.0 / hy**2)]
        for a, bb, w in (
            (idx[1:, :], idx[:-1, :], 1.0 / hx**2),
            (idx[:-1, :], idx[1:, :], 1.0 / hx**2),
            (idx[:, 1:], idx[:, :-1], 1.0 / hy**2),
            (idx[:, :-1], idx[:, 1:], 1.0 / hy**2),
        ):
            rows.append(a.ravel())
            cols.append(bb.ravel())
            vals.append(np.full(a.size, w))
        b_coef = np.zeros((mx, my))
        b_coef[0, :] += 1.0 / hx**2
        b_coef[-1, :] += 1.0 / hx**2
        b_coef[:, 0] += 1.0 / hy**2
        b_coef[:, -1] += 1.0 / hy**2
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), b_coef.ravel()

    def flux_functional(self) -> tuple:
        """``(fu, fb)`` with boundary_flux(u, b) == fu @ u + fb * b."""
        _, _, _, b_coef = self.laplacian_stencil()
        w = self.weights
        fu = -w * b_coef
        return fu, float(np.dot(w, b_coef))
