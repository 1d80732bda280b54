"""Exception hierarchy shared by the solver stack."""

from __future__ import annotations


class PlasmaFBPError(Exception):
    """Base class for all package errors."""


class ConfigError(PlasmaFBPError):
    pass


# expression language ------------------------------------------------------

class ExprError(PlasmaFBPError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        self.message = message
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown identifier '{name}'", offset)


class ExprDomainError(ExprError):
    def __init__(self, message: str, subexpr: str):
        self.subexpr = subexpr
        super().__init__(f"{message} in {subexpr}")


class NonDifferentiableError(ExprError):
    pass


# linear algebra -----------------------------------------------------------

class SingularSystemError(PlasmaFBPError):
    def __init__(self, pivot_index: int, pivot: float = 0.0):
        self.pivot_index = pivot_index
        self.pivot = pivot
        super().__init__(f"singular system: pivot {pivot:.3e} at index {pivot_index}")


class EigenNonConvergence(PlasmaFBPError):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"eigensolver did not converge after {iterations} steps (residual {residual:.3e})"
        )


# nonlinear solve / continuation -------------------------------------------

class NewtonError(PlasmaFBPError):
    kind = "newton"

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class MaxIterationsError(NewtonError):
    kind = "max-iterations"


class SingularJacobianError(NewtonError):
    kind = "singular"


class DivergenceError(NewtonError):
    kind = "divergence"


class ContinuationStalled(PlasmaFBPError):
    def __init__(self, message: str, last_good: float, cause=None, hypotheses=None):
        self.last_good = last_good
        self.cause = cause
        self.hypotheses = hypotheses
        super().__init__(message)


class HypothesisViolation(PlasmaFBPError):
    def __init__(self, report):
        self.report = report
        super().__init__(
            f"derivative bound M={report.M:.6g} violates M < min(c0, lambda2)"
            f" = {min(report.c0, report.lambda2):.6g}"
        )
