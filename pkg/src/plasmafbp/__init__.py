"""Continuation solver for a semilinear elliptic free-boundary problem.

Finds u, the unknown boundary value b and the mean forcing mu in

    Delta u + k g(x, u) = mu + theta   in D,   u = b on the boundary,
    zero total boundary flux,           average of u = xi1,

by continuation in k and then in xi1.  See the README for a walk-through.
"""

__version__ = "0.1.0"

from .analysis import HypothesisReport, Window, check_hypotheses, ll_window
from .continuation import (
    ContinuationCurve,
    CurveSummary,
    TraceResult,
    continue_in_k,
    curve_summary,
    sweep_xi,
    trace_mu_crossings,
)
from .errors import (
    ConfigError,
    ContinuationStalled,
    DivergenceError,
    HypothesisViolation,
    MaxIterationsError,
    NewtonError,
    PlasmaFBPError,
    SingularJacobianError,
    SingularSystemError,
)
from .mesh import Mesh
from .model import (
    Forcing,
    Nonlinearity,
    ProblemSpec,
    decompose_forcing,
    estimate_M,
    gaussian_nonlinearity,
    make_spec,
    nonlinearity_from_text,
    tanh_nonlinearity,
    zero_nonlinearity,
)
from .solver import AugmentedState, newton_solve, solve_linear_k0, verify_state

__all__ = [
    "AugmentedState",
    "ConfigError",
    "ContinuationCurve",
    "ContinuationStalled",
    "CurveSummary",
    "DivergenceError",
    "Forcing",
    "HypothesisReport",
    "HypothesisViolation",
    "MaxIterationsError",
    "Mesh",
    "NewtonError",
    "Nonlinearity",
    "PlasmaFBPError",
    "ProblemSpec",
    "SingularJacobianError",
    "SingularSystemError",
    "TraceResult",
    "Window",
    "check_hypotheses",
    "continue_in_k",
    "curve_summary",
    "decompose_forcing",
    "estimate_M",
    "gaussian_nonlinearity",
    "ll_window",
    "make_spec",
    "newton_solve",
    "nonlinearity_from_text",
    "solve_linear_k0",
    "sweep_xi",
    "tanh_nonlinearity",
    "trace_mu_crossings",
    "verify_state",
    "zero_nonlinearity",
]
