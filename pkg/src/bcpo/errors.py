"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 1, numerical
and convergence failures exit 2.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class EmptyDatasetError(ValidationError):
    """An operation that needs at least one transition got none."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values or a singular system."""


class ConvergenceError(NumericalError):
    """Fixed-point iteration stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleTrustRegionError(NumericalError):
    """No multiplier up to the search cap satisfies the KL trust region."""
