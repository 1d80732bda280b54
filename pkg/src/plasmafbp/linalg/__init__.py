"""Sparse storage, pivoted LU and constrained eigensolvers."""

from .factor import AVAILABLE_BACKENDS, BACKEND, LUFactor, fill_reducing_order, lu_factor
from .sparse import SparseMatrix
from .bordered import BorderedMatrix
from .eigen import EigenResult, dirichlet_matrix, eig_c0, eig_smallest_dirichlet

__all__ = [
    "AVAILABLE_BACKENDS",
    "BACKEND",
    "BorderedMatrix",
    "EigenResult",
    "LUFactor",
    "SparseMatrix",
    "dirichlet_matrix",
    "eig_c0",
    "eig_smallest_dirichlet",
    "fill_reducing_order",
    "lu_factor",
]
